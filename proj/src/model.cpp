#include "cdcor/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "cdcor/error.hpp"
#include "cdcor/kernels.hpp"
#include "cdcor/rng.hpp"

namespace cdcor::model {

namespace names {

namespace {
std::string with_domain(const char* stem, Domain d) {
  return std::string(stem) + "." + data::to_string(d);
}
}  // namespace

std::string item(Domain d) { return with_domain("item", d); }
std::string attribute(Domain d) { return with_domain("attr", d); }
std::string preference(Domain d) { return with_domain("pref", d); }
std::string fusion(Domain d) { return with_domain("fusion", d); }
std::string head(Domain d) { return with_domain("head", d); }

}  // namespace names

namespace {

constexpr Domain kDomains[] = {Domain::kSource, Domain::kTarget};

Matrix uniform(std::size_t rows, std::size_t cols, double range, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = range * (2.0 * u - 1.0);
  }
  return m;
}

template <typename F>
auto named_term(const char* term, F&& build) {
  try {
    return build();
  } catch (const NonFiniteError& e) {
    throw NonFiniteError(std::string("loss term ") + term + ": " + e.what());
  }
}

void expect_shape(const ParameterSet& p, const std::string& name, std::size_t rows,
                  std::size_t cols) {
  if (!p.contains(name)) throw ShapeError("missing parameter " + name);
  const Matrix& v = p.at(name).value;
  if (v.rows() != rows || v.cols() != cols) {
    throw ShapeError("parameter " + name + " has shape " + v.shape_string() + ", expected " +
                     shape_string(rows, cols));
  }
}

void expect_rows(const char* op, Var v, std::size_t k) {
  if (v.rows() != k) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(k) + " rows, got " +
                     v.value().shape_string());
  }
}

std::size_t k_of(Tape& t) { return t.parameter(names::kSharedEncoder).rows(); }

}  // namespace

ParameterSet init_params(const ModelShape& s, std::uint64_t seed, double init_range) {
  if (s.k == 0 || s.users == 0 || s.source_items == 0 || s.target_items == 0) {
    throw ConfigError("model shape must be positive in every dimension");
  }
  auto rng = make_rng(seed, streams::kInit);
  const std::size_t k = s.k;
  ParameterSet p;
  for (Domain d : kDomains) {
    p.add(names::item(d), uniform(k, s.items(d), init_range, rng));
    p.add(names::attribute(d), uniform(k, s.users, init_range, rng));
    p.add(names::preference(d), uniform(k, k, init_range, rng));
    p.add(names::fusion(d), uniform(k, 2 * k, init_range, rng));
    p.add(names::head(d), uniform(2, k, init_range, rng));
  }
  p.add(names::kSharedEncoder, uniform(k, k, init_range, rng));
  p.add(names::kDiscHidden1, uniform(k, k, init_range, rng));
  p.add(names::kDiscHidden2, uniform(k, k, init_range, rng));
  p.add(names::kDiscOut, uniform(2, k, init_range, rng));
  p.add(names::kAdjacency, Matrix(2 * k, 2 * k));
  return p;
}

ModelShape shape_of(const ParameterSet& p) {
  if (!p.contains(names::kSharedEncoder)) throw ShapeError("missing parameter shared.encoder");
  ModelShape s;
  s.k = p.at(names::kSharedEncoder).value.rows();
  s.users = p.at(names::attribute(Domain::kTarget)).value.cols();
  s.source_items = p.at(names::item(Domain::kSource)).value.cols();
  s.target_items = p.at(names::item(Domain::kTarget)).value.cols();
  const std::size_t k = s.k;
  for (Domain d : kDomains) {
    expect_shape(p, names::item(d), k, s.items(d));
    expect_shape(p, names::attribute(d), k, s.users);
    expect_shape(p, names::preference(d), k, k);
    expect_shape(p, names::fusion(d), k, 2 * k);
    expect_shape(p, names::head(d), 2, k);
  }
  expect_shape(p, names::kSharedEncoder, k, k);
  expect_shape(p, names::kDiscHidden1, k, k);
  expect_shape(p, names::kDiscHidden2, k, k);
  expect_shape(p, names::kDiscOut, 2, k);
  expect_shape(p, names::kAdjacency, 2 * k, 2 * k);
  if (p.size() != 15) throw ShapeError("unexpected parameters in model parameter set");
  return s;
}

Var embed_items(Tape& t, Domain d, const std::vector<std::size_t>& items) {
  return t.gather_columns(t.parameter(names::item(d)), items);
}

Var embed_user_attributes(Tape& t, Domain d, const std::vector<std::size_t>& users) {
  return t.gather_columns(t.parameter(names::attribute(d)), users);
}

Var encode_domain_specific(Tape& t, Domain d, Var u_att) {
  return t.matmul(t.parameter(names::preference(d)), u_att);
}

Var encode_domain_shared(Tape& t, Var u_att) {
  return t.relu(t.matmul(t.parameter(names::kSharedEncoder), u_att));
}

Var discriminate(Tape& t, Var shared) {
  Var h1 = t.relu(t.matmul(t.parameter(names::kDiscHidden1), shared));
  Var h2 = t.relu(t.matmul(t.parameter(names::kDiscHidden2), h1));
  return t.sigmoid(t.matmul(t.parameter(names::kDiscOut), h2));
}

Var domain_loss(Tape& t, Var out, Domain label) {
  if (out.rows() != 2) throw ShapeError("domain_loss: expected 2 rows, got " + out.value().shape_string());
  Matrix labels(2, out.cols());
  const std::size_t hot = label == Domain::kSource ? 0 : 1;
  for (std::size_t c = 0; c < out.cols(); ++c) labels(hot, c) = 1.0;
  return t.binary_cross_entropy(out, labels);
}

Var fuse(Tape& t, Domain d, Var u, Var u_cau) {
  return t.matmul(t.parameter(names::fusion(d)), t.concat_rows(u, u_cau));
}

Var predict(Tape& t, Domain d, Var u, Var u_cau, Var items) {
  const std::size_t k = k_of(t);
  expect_rows("predict", u, k);
  expect_rows("predict", u_cau, k);
  expect_rows("predict", items, k);
  Var logits = t.matmul(t.parameter(names::head(d)), t.hadamard(fuse(t, d, u, u_cau), items));
  return t.slice_rows(t.softmax2(logits), 1, 2);
}

Var interaction_loss(Tape& t, Var probabilities, const std::vector<double>& labels) {
  if (probabilities.rows() != 1 || probabilities.cols() != labels.size()) {
    throw ShapeError("interaction_loss: probabilities " + probabilities.value().shape_string() +
                     " vs " + std::to_string(labels.size()) + " labels");
  }
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw Error("interaction_loss: labels must be 0 or 1");
  }
  return t.binary_cross_entropy(probabilities, Matrix(1, labels.size(), labels));
}

Var effective_adjacency(Tape& t, bool strict_mask) {
  Var a = t.parameter(names::kAdjacency);
  if (!strict_mask) return a;
  return t.hadamard(a, t.constant(causal::attribute_to_preference_mask(a.rows() / 2)));
}

ForwardArtifacts forward(Tape& t, Domain d, const Batch& b, const ForwardOptions& o) {
  if (b.items.size() != b.users.size()) throw Error("batch users and items differ in length");
  const std::size_t k = k_of(t);
  ForwardArtifacts f;
  f.u_att = embed_user_attributes(t, d, b.users);
  f.u = encode_domain_specific(t, d, f.u_att);
  f.shared = encode_domain_shared(t, f.u_att);
  f.causal = o.use_causal
                 ? causal::infer_causal_preference(t, effective_adjacency(t, o.strict_mask), f.u_att)
                 : t.constant(Matrix(k, b.size()));
  f.fused = fuse(t, d, f.u, f.causal);
  f.items = embed_items(t, d, b.items);
  f.logits = t.matmul(t.parameter(names::head(d)), t.hadamard(f.fused, f.items));
  f.probability = t.slice_rows(t.softmax2(f.logits), 1, 2);
  f.discriminator = discriminate(t, t.gradient_reversal(f.shared, o.grl_scale));
  return f;
}

TotalLoss total_loss(Tape& t, const Batch& target, const Batch& source, const LossWeights& w) {
  if (target.empty()) throw Error("total_loss: empty target batch");
  if (w.use_source && source.empty()) throw Error("total_loss: empty source batch");
  const ForwardOptions opts{w.use_causal, w.strict_mask, w.grl_scale};

  TotalLoss out;
  LossBreakdown& br = out.breakdown;
  out.target = named_term("L_t", [&] { return forward(t, Domain::kTarget, target, opts); });
  Var l_t = named_term("L_t", [&] { return interaction_loss(t, out.target.probability, target.labels); });
  Var total = l_t;
  out.target_term = l_t;
  br.target = l_t.scalar();

  auto count_correct = [&br](const Matrix& probs, Domain label) {
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      const bool says_target = probs(1, c) > probs(0, c);
      br.discriminator_correct += says_target == (label == Domain::kTarget) ? 1.0 : 0.0;
    }
    br.discriminator_examples += static_cast<double>(probs.cols());
  };

  if (w.use_source) {
    out.source = named_term("L_s", [&] { return forward(t, Domain::kSource, source, opts); });
    Var l_s = named_term("L_s", [&] { return interaction_loss(t, out.source.probability, source.labels); });
    Var l_c = named_term("L_c", [&] {
      return t.add(domain_loss(t, out.source.discriminator, Domain::kSource),
                   domain_loss(t, out.target.discriminator, Domain::kTarget));
    });
    out.source_term = l_s;
    out.domain_term = l_c;
    br.source = l_s.scalar();
    br.domain = l_c.scalar();
    count_correct(out.source.discriminator.value(), Domain::kSource);
    count_correct(out.target.discriminator.value(), Domain::kTarget);
    total = t.add(total, t.scale(l_s, w.source));
    total = t.add(total, t.scale(l_c, w.domain));
  }

  if (w.use_causal) {
    std::vector<Var> blocks{t.concat_rows(out.target.u_att, out.target.shared)};
    if (w.use_source) blocks.push_back(t.concat_rows(out.source.u_att, out.source.shared));
    const auto terms = causal::causal_loss(t, effective_adjacency(t, w.strict_mask), blocks, w.gamma);
    br.causal_terms = terms.values();
    br.causal = br.causal_terms.total;
    out.causal_term = terms.total;
    total = t.add(total, t.scale(terms.total, w.causal));
  }

  Var reg = named_term("reg", [&] {
    const ParameterSet* params = t.parameters();
    if (params == nullptr || params->size() == 0) throw Error("total_loss: tape has no parameters");
    Var acc = t.squared_norm(t.parameter((*params)[0].name));
    for (std::size_t i = 1; i < params->size(); ++i) {
      acc = t.add(acc, t.squared_norm(t.parameter((*params)[i].name)));
    }
    return t.sqrt(acc);
  });
  out.reg_term = reg;
  br.reg = reg.scalar();
  out.total = named_term("total", [&] { return t.add(total, t.scale(reg, w.reg)); });
  br.total = out.total.scalar();
  return out;
}

Scorer::Scorer(const ParameterSet& params, Domain d, bool use_causal, bool strict_mask) {
  const ModelShape s = shape_of(params);
  k_ = s.k;
  // Fused user vectors through the same tape ops as `forward`, so that every
  // column carries identical arithmetic.
  ParameterSet& mutable_params = const_cast<ParameterSet&>(params);
  Tape t(&mutable_params);
  std::vector<std::size_t> users(s.users);
  for (std::size_t u = 0; u < s.users; ++u) users[u] = u;
  Var u_att = embed_user_attributes(t, d, users);
  Var u = encode_domain_specific(t, d, u_att);
  Var u_cau = use_causal
                  ? causal::infer_causal_preference(t, effective_adjacency(t, strict_mask), u_att)
                  : t.constant(Matrix(k_, s.users));
  fused_ = fuse(t, d, u, u_cau).value();
  items_ = params.at(names::item(d)).value;
  head_ = params.at(names::head(d)).value;
}

double Scorer::score(std::size_t user, std::size_t item) const {
  if (user >= fused_.cols() || item >= items_.cols()) {
    throw Error("score: user " + std::to_string(user) + " / item " + std::to_string(item) +
                " out of range");
  }
  double z0 = 0.0;
  double z1 = 0.0;
  for (std::size_t r = 0; r < k_; ++r) {
    const double x = fused_(r, user) * items_(r, item);
    z0 += head_(0, r) * x;
    z1 += head_(1, r) * x;
  }
  return kernels::logistic(z1 - z0);
}

Matrix shared_preferences(const ParameterSet& params, Domain d,
                          const std::vector<std::size_t>& users) {
  Tape t(const_cast<ParameterSet*>(&params));
  return encode_domain_shared(t, embed_user_attributes(t, d, users)).value();
}

Matrix discriminator_output(const ParameterSet& params, const Matrix& shared) {
  Tape t(const_cast<ParameterSet*>(&params));
  return discriminate(t, t.constant(shared)).value();
}

ToyInstance make_toy_instance(std::uint64_t seed) {
  const ModelShape shape{4, 6, 8, 8};
  ToyInstance toy{init_params(shape, seed), {}, {}};
  auto rng = make_rng(seed, streams::kInit + 100);
  for (Parameter& p : toy.params) {
    const bool adjacency = p.name == names::kAdjacency;
    for (double& v : p.value.values()) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      if (adjacency) {
        v = (rng() & 1 ? 1.0 : -1.0) * (0.05 + 0.15 * u);
      } else if (p.name.starts_with("head.")) {
        v = 0.5 * (2.0 * u - 1.0);
      } else {
        v = 0.1 + 0.4 * u;
      }
    }
  }
  for (Domain d : kDomains) {
    Batch& b = d == Domain::kTarget ? toy.target : toy.source;
    for (std::size_t e = 0; e < 8; ++e) {
      b.users.push_back((e + (d == Domain::kTarget ? 0 : 3)) % shape.users);
      b.items.push_back((3 * e + 1) % 8);
      b.labels.push_back(e % 2 == 0 ? 1.0 : 0.0);
    }
  }
  return toy;
}

std::vector<std::string> reversed_blocks() {
  return {names::attribute(Domain::kSource), names::attribute(Domain::kTarget),
          names::kSharedEncoder};
}

GradCheckReport check_total_loss_gradients(ToyInstance& toy, const LossWeights& w, double step,
                                           const std::function<void(ParameterSet&)>& corrupt) {
  LossBuilder loss = [&](Tape& t) { return total_loss(t, toy.target, toy.source, w).total; };
  LossBuilder surrogate = [&](Tape& t) {
    const TotalLoss l = total_loss(t, toy.target, toy.source, w);
    if (!w.use_source) return l.total;
    return t.sub(l.total, t.scale(l.domain_term, (1.0 + w.grl_scale) * w.domain));
  };
  const auto upstream = reversed_blocks();
  std::vector<std::string> rest;
  for (const Parameter& p : toy.params) {
    if (std::find(upstream.begin(), upstream.end(), p.name) == upstream.end()) rest.push_back(p.name);
  }
  GradCheckReport direct = finite_diff_check(loss, toy.params, step, rest, corrupt);
  GradCheckReport reversed = finite_diff_check(loss, toy.params, step, upstream, corrupt, surrogate);

  GradCheckReport merged;
  for (const Parameter& p : toy.params) {
    const bool up = std::find(upstream.begin(), upstream.end(), p.name) != upstream.end();
    merged.blocks.push_back((up ? reversed : direct).block(p.name));
  }
  merged.max_error = std::max(direct.max_error, reversed.max_error);
  return merged;
}

namespace {

constexpr char kMagic[8] = {'C', 'D', 'C', 'O', 'R', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof bytes)) {
    throw DataError("truncated checkpoint " + path.string());
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::filesystem::path& path) {
  const auto n = get<std::uint32_t>(in, path);
  if (n > (1u << 20)) throw DataError("corrupt string length in " + path.string());
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw DataError("truncated checkpoint " + path.string());
  return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                      const std::string& provenance) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put_string(out, provenance);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter& p : params) {
    put_string(out, p.name);
    put<std::uint64_t>(out, p.value.rows());
    put<std::uint64_t>(out, p.value.cols());
    for (double v : p.value.values()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.provenance = get_string(in, path);
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in, path);
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    if (rows > (1u << 24) || cols > (1u << 24)) throw DataError("corrupt shape in " + path.string());
    Matrix m(rows, cols);
    for (double& v : m.values()) v = std::bit_cast<double>(get<std::uint64_t>(in, path));
    c.params.add(std::move(name), std::move(m));
  }
  return c;
}

}  // namespace cdcor::model
