#include "cdcor/causal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cdcor/acyclicity.hpp"
#include "cdcor/error.hpp"
#include "cdcor/kernels.hpp"

namespace cdcor::causal {

namespace {

std::size_t half_of(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() % 2 != 0) {
    throw ShapeError("adjacency must be square with even side, got " + a.shape_string());
  }
  return a.rows() / 2;
}

template <typename F>
Var named_term(const char* term, F&& build) {
  try {
    return build();
  } catch (const NonFiniteError& e) {
    throw NonFiniteError(std::string("causal term ") + term + ": " + e.what());
  }
}

}  // namespace

CausalLossTerms CausalLossVars::values() const {
  return {reconstruction.scalar(), dag.scalar(), a2p.scalar(),
          pnr.scalar(),            sparsity.scalar(), total.scalar()};
}

Matrix scm_reconstruct(const Matrix& adjacency, const Matrix& samples) {
  if (adjacency.rows() != samples.rows()) {
    throw ShapeError("scm_reconstruct: adjacency " + adjacency.shape_string() + " vs samples " +
                     samples.shape_string());
  }
  return kernels::matmul_tn(adjacency, samples);
}

CausalLossVars causal_loss(Tape& t, Var adjacency, std::span<const Var> blocks,
                           const CausalWeights& w) {
  const std::size_t k = half_of(adjacency.value());
  if (blocks.empty()) throw Error("causal_loss: empty batch");

  CausalLossVars out;
  out.reconstruction = named_term("L_rec", [&] {
    std::size_t n = 0;
    Var acc{};
    bool first = true;
    Var at = t.transpose(adjacency);
    for (Var h : blocks) {
      if (h.rows() != 2 * k) {
        throw ShapeError("causal_loss: sample block " + h.value().shape_string() +
                         " does not match adjacency " + adjacency.value().shape_string());
      }
      n += h.cols();
      Var err = t.squared_norm(t.sub(h, t.matmul(at, h)));
      acc = first ? err : t.add(acc, err);
      first = false;
    }
    if (n == 0) throw Error("causal_loss: empty batch");
    return t.scale(acc, 1.0 / static_cast<double>(n));
  });
  out.dag = named_term("L_dag", [&] { return t.acyclicity(adjacency); });
  out.a2p = named_term("L_a2p", [&] { return t.l1_norm(t.slice(adjacency, k, 2 * k, 0, k)); });
  out.pnr = named_term("L_pnr", [&] {
    Var cols = t.column_l1(t.slice(adjacency, 0, 2 * k, k, 2 * k));
    return t.scale(t.sum(t.log(t.add_scalar(cols, kPnrEpsilon))), -1.0);
  });
  out.sparsity = named_term("L1", [&] { return t.l1_norm(adjacency); });
  out.total = named_term("L_cau", [&] {
    Var total = out.reconstruction;
    total = t.add(total, t.scale(out.dag, w.dag));
    total = t.add(total, t.scale(out.a2p, w.a2p));
    total = t.add(total, t.scale(out.pnr, w.pnr));
    total = t.add(total, t.scale(out.sparsity, w.sparsity));
    return total;
  });
  return out;
}

CausalLossTerms causal_loss(const Matrix& adjacency, const Matrix& samples,
                            const CausalWeights& weights) {
  Tape t;
  Var a = t.constant(adjacency);
  Var h = t.constant(samples);
  return causal_loss(t, a, std::span<const Var>(&h, 1), weights).values();
}

Var infer_causal_preference(Tape& t, Var adjacency, Var attributes) {
  const std::size_t k = half_of(adjacency.value());
  if (attributes.rows() != k) {
    throw ShapeError("infer_causal_preference: attributes " + attributes.value().shape_string() +
                     " vs adjacency " + adjacency.value().shape_string());
  }
  Var h0 = t.concat_rows(attributes, t.constant(Matrix(k, attributes.cols())));
  Var posterior = t.matmul(t.transpose(adjacency), h0);
  return t.slice_rows(posterior, k, 2 * k);
}

Matrix infer_causal_preference(const Matrix& adjacency, const Matrix& attributes) {
  Tape t;
  return infer_causal_preference(t, t.constant(adjacency), t.constant(attributes)).value();
}

Matrix attribute_to_preference_mask(std::size_t k) {
  Matrix m(2 * k, 2 * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = k; j < 2 * k; ++j) m(i, j) = 1.0;
  return m;
}

ExtractedGraph extract_graph(const Matrix& adjacency, double threshold,
                             const std::vector<Edge>* reference) {
  if (!(threshold > 0.0)) throw Error("extract_graph: threshold must be positive");
  ExtractedGraph g;
  for (std::size_t i = 0; i < adjacency.rows(); ++i)
    for (std::size_t j = 0; j < adjacency.cols(); ++j)
      if (std::abs(adjacency(i, j)) >= threshold) g.edges.push_back({i, j, adjacency(i, j)});
  std::sort(g.edges.begin(), g.edges.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
    if (std::abs(a.weight) != std::abs(b.weight)) return std::abs(a.weight) > std::abs(b.weight);
    return a.from != b.from ? a.from < b.from : a.to < b.to;
  });
  if (reference) {
    const std::set<Edge> truth(reference->begin(), reference->end());
    std::size_t hits = 0;
    for (const auto& e : g.edges) hits += truth.contains({e.from, e.to}) ? 1 : 0;
    StructureMetrics m;
    m.precision = g.edges.empty() ? 0.0 : static_cast<double>(hits) / g.edges.size();
    m.recall = truth.empty() ? 0.0 : static_cast<double>(hits) / truth.size();
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    g.metrics = m;
  }
  return g;
}

void write_graph(const std::filesystem::path& path, const Matrix& adjacency, double threshold,
                 const std::string& provenance) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const auto g = extract_graph(adjacency, threshold);
  out.precision(17);
  out << "# " << provenance << '\n';
  out << "# acyclicity=" << acyclicity(adjacency) << " threshold=" << threshold << '\n';
  out << "i,j,weight\n";
  for (const auto& e : g.edges) out << e.from << ',' << e.to << ',' << e.weight << '\n';
}

}  // namespace cdcor::causal
