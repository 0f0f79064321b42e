#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cdcor/acyclicity.hpp"
#include "cdcor/error.hpp"
#include "cdcor/training.hpp"
#include "doctest.h"

using namespace cdcor;
using training::Ablation;
using training::TrainConfig;
namespace names = model::names;

namespace {

struct Fixture {
  data::SyntheticData syn;
  data::SplitResult split;
};

const Fixture& small_fixture() {
  static const Fixture f = [] {
    data::SynthConfig c;
    c.users = 120;
    c.source_items = 150;
    c.target_items = 150;
    c.target_density = 0.05;
    c.seed = 3;
    Fixture out{data::synth_generate(c), {}};
    out.split = data::split_iid(out.syn.dataset, {}, 3);
    return out;
  }();
  return f;
}

TrainConfig small_config() {
  TrainConfig c;
  c.k = 4;
  c.epochs = 4;
  c.batch_size = 128;
  c.seed = 11;
  c.patience = 100;
  return c;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_params(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].value.size() != b[i].value.size()) return false;
    for (std::size_t e = 0; e < a[i].value.size(); ++e)
      if (!same_bits(a[i].value[e], b[i].value[e])) return false;
  }
  return true;
}

bool same_history(const training::TrainHistory& a, const training::TrainHistory& b) {
  if (a.epochs.size() != b.epochs.size() || a.best_epoch != b.best_epoch) return false;
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    const auto& x = a.epochs[i];
    const auto& y = b.epochs[i];
    for (auto [p, q] : {std::pair{x.target, y.target}, {x.source, y.source}, {x.domain, y.domain},
                        {x.causal, y.causal}, {x.reg, y.reg}, {x.total, y.total},
                        {x.acyclicity, y.acyclicity}, {x.disc_acc, y.disc_acc},
                        {x.val_hr10, y.val_hr10}, {x.val_ndcg10, y.val_ndcg10}})
      if (!same_bits(p, q)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("ablation and optimizer names") {
  CHECK(training::parse_ablation("full") == Ablation::kFull);
  CHECK(training::parse_ablation("no_causal") == Ablation::kNoCausal);
  CHECK(training::parse_ablation("no_source") == Ablation::kNoSource);
  CHECK(std::string(training::to_string(Ablation::kNoSource)) == "no_source");
  CHECK_THROWS_AS(training::parse_ablation("w/o causal"), ConfigError);
  CHECK(training::parse_optimizer("sgd") == training::OptimizerKind::kSgd);
  CHECK(std::string(training::to_string(training::OptimizerKind::kAdam)) == "adam");
  CHECK_THROWS_AS(training::parse_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("config defaults and validation") {
  TrainConfig c;
  CHECK(c.k == 16);
  CHECK(c.learning_rate == 0.01);
  CHECK(c.negatives == 4);
  CHECK(c.patience == 10);
  CHECK(c.weights.source == 1.0);
  CHECK(c.weights.domain == 0.5);
  CHECK(c.weights.causal == 1.0);
  CHECK(c.weights.reg == 1e-5);
  CHECK(c.weights.grl_scale == 1.0);
  CHECK_NOTHROW(c.validate());

  auto bad = [](auto edit) {
    TrainConfig x;
    edit(x);
    CHECK_THROWS_AS(x.validate(), ConfigError);
  };
  bad([](TrainConfig& x) { x.learning_rate = 0.0; });
  bad([](TrainConfig& x) { x.learning_rate = -1e-3; });
  bad([](TrainConfig& x) { x.epochs = 0; });
  bad([](TrainConfig& x) { x.batch_size = 0; });
  bad([](TrainConfig& x) { x.k = 0; });
  bad([](TrainConfig& x) { x.weights.domain = -0.5; });
  bad([](TrainConfig& x) { x.weights.gamma.pnr = std::nan(""); });
  bad([](TrainConfig& x) { x.weights.grl_scale = -1.0; });
  bad([](TrainConfig& x) { x.dag_schedule.growth = 0.5; });

  c.ablation = Ablation::kNoCausal;
  auto w = c.effective_weights();
  CHECK_FALSE(w.use_causal);
  CHECK(w.causal == 0.0);
  CHECK(w.use_source);
  c.ablation = Ablation::kNoSource;
  w = c.effective_weights();
  CHECK(w.use_causal);
  CHECK_FALSE(w.use_source);
}

TEST_CASE("sgd and adam updates") {
  ParameterSet p;
  p.add("w", Matrix{{1.0, -2.0}});
  p[0].grad = Matrix{{0.5, -4.0}};
  training::Optimizer sgd(training::OptimizerKind::kSgd, 0.1);
  sgd.step(p);
  CHECK(p[0].value[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(p[0].value[1] == doctest::Approx(-1.6).epsilon(1e-15));

  ParameterSet q;
  q.add("w", Matrix{{1.0}});
  training::Optimizer adam(training::OptimizerKind::kAdam, 0.01);
  // First step with bias correction moves by lr * g / (|g| + eps).
  q[0].grad = Matrix{{2.0}};
  adam.step(q);
  CHECK(q[0].value[0] == doctest::Approx(1.0 - 0.01 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  q[0].grad = Matrix{{-1.0}};
  adam.step(q);
  const double m = 0.9 * 0.1 * 2.0 + 0.1 * -1.0;
  const double v = 0.999 * 0.001 * 4.0 + 0.001 * 1.0;
  const double mh = m / (1.0 - 0.81);
  const double vh = v / (1.0 - 0.999 * 0.999);
  const double expected = 1.0 - 0.01 * 2.0 / (2.0 + 1e-8) - 0.01 * mh / (std::sqrt(vh) + 1e-8);
  CHECK(q[0].value[0] == doctest::Approx(expected).epsilon(1e-14));

  ParameterSet z;
  z.add("w", Matrix(2, 2));
  training::Optimizer adam_zero(training::OptimizerKind::kAdam, 0.5);
  adam_zero.step(z);
  for (double x : z[0].value.values()) CHECK(x == 0.0);
}

TEST_CASE("identical seeds give bitwise identical runs") {
  const auto& f = small_fixture();
  const auto a = training::train(f.syn.dataset, f.split, small_config());
  const auto b = training::train(f.syn.dataset, f.split, small_config());
  CHECK(same_history(a.history, b.history));
  CHECK(same_params(a.params, b.params));

  TrainConfig other = small_config();
  other.seed = 12;
  const auto c = training::train(f.syn.dataset, f.split, other);
  CHECK_FALSE(same_params(a.params, c.params));
}

TEST_CASE("history records and best snapshot") {
  const auto& f = small_fixture();
  TrainConfig c = small_config();
  c.epochs = 6;
  const auto r = training::train(f.syn.dataset, f.split, c);
  REQUIRE(r.history.epochs.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& e = r.history.epochs[i];
    CHECK(e.epoch == i + 1);
    CHECK(std::isfinite(e.total));
    CHECK(e.target > 0.0);
    CHECK(e.source > 0.0);
    CHECK(e.domain > 0.0);
    CHECK(e.disc_acc >= 0.0);
    CHECK(e.disc_acc <= 1.0);
    CHECK(e.val_hr10 >= 0.0);
    CHECK(e.val_hr10 <= 1.0);
    CHECK(e.val_ndcg10 <= e.val_hr10);
    CHECK(e.acyclicity >= 0.0);
  }
  CHECK_FALSE(r.history.stopped_early);
  const std::size_t best = r.history.best_epoch;
  REQUIRE(best >= 1);
  for (const auto& e : r.history.epochs) CHECK(e.val_hr10 <= r.history.epochs[best - 1].val_hr10);

  // The returned parameters are the state after the best epoch.
  TrainConfig prefix = c;
  prefix.epochs = best;
  const auto p = training::train(f.syn.dataset, f.split, prefix);
  CHECK(same_params(r.params, p.params));
  CHECK(r.history.epochs[best - 1].acyclicity == acyclicity(r.adjacency()));
}

TEST_CASE("early stopping after patience epochs without improvement") {
  const auto& f = small_fixture();
  TrainConfig c = small_config();
  c.epochs = 40;
  c.patience = 2;
  c.learning_rate = 0.05;
  const auto r = training::train(f.syn.dataset, f.split, c);
  const auto& h = r.history;
  if (h.stopped_early) {
    CHECK(h.epochs.size() == h.best_epoch + 2);
    for (std::size_t e = h.best_epoch; e < h.epochs.size(); ++e)
      CHECK(h.epochs[e].val_hr10 <= h.epochs[h.best_epoch - 1].val_hr10);
  } else {
    CHECK(h.epochs.size() == 40);
  }
  for (std::size_t e = 0; e + 1 < h.best_epoch; ++e)
    CHECK(h.epochs[e].val_hr10 < h.epochs[h.best_epoch - 1].val_hr10);
}

TEST_CASE("no_causal leaves the adjacency at zero") {
  const auto& f = small_fixture();
  TrainConfig c = small_config();
  c.ablation = Ablation::kNoCausal;
  const auto r = training::train(f.syn.dataset, f.split, c);
  for (double a : r.adjacency().values()) CHECK(a == 0.0);
  for (const auto& e : r.history.epochs) {
    CHECK(e.causal == 0.0);
    CHECK(e.acyclicity == 0.0);
    CHECK(e.source > 0.0);
  }
}

TEST_CASE("no_source drops the source and adversarial terms") {
  const auto& f = small_fixture();
  TrainConfig c = small_config();
  c.ablation = Ablation::kNoSource;
  const auto r = training::train(f.syn.dataset, f.split, c);
  for (const auto& e : r.history.epochs) {
    CHECK(e.source == 0.0);
    CHECK(e.domain == 0.0);
    CHECK(e.disc_acc == 0.0);
  }
}

TEST_CASE("both ablations reduce training to the target loss") {
  const auto& f = small_fixture();
  TrainConfig c = small_config();
  c.ablation = Ablation::kNoSource;
  c.weights.use_causal = false;
  c.weights.causal = 0.0;
  const auto r = training::train(f.syn.dataset, f.split, c);
  for (const auto& e : r.history.epochs) {
    CHECK(e.source == 0.0);
    CHECK(e.domain == 0.0);
    CHECK(e.causal == 0.0);
    CHECK(e.total == doctest::Approx(e.target + 1e-5 * e.reg).epsilon(1e-12));
  }
  for (double a : r.adjacency().values()) CHECK(a == 0.0);
}

TEST_CASE("total loss is non-increasing over epochs") {
  // Full-batch steps on a fixed negative draw, so each record is the training
  // loss at the start of its epoch.
  data::SynthConfig sc;
  sc.seed = 1;
  const auto syn = data::synth_generate(sc);
  const auto split = data::split_iid(syn.dataset, {}, 1);
  for (Ablation a : {Ablation::kFull, Ablation::kNoSource}) {
    TrainConfig c;
    c.seed = 1;
    c.epochs = 30;
    c.patience = 100;
    c.learning_rate = 0.003;
    c.batch_size = 1u << 20;
    c.resample_negatives = false;
    c.ablation = a;
    const auto r = training::train(syn.dataset, split, c);
    REQUIRE(r.history.epochs.size() == 30);
    std::size_t down = 0;
    for (std::size_t e = 1; e < 30; ++e)
      down += r.history.epochs[e].total <= r.history.epochs[e - 1].total ? 1 : 0;
    INFO("ablation " << training::to_string(a) << ", non-increasing epochs " << down << "/29");
    CHECK(down >= 27);
  }
}

TEST_CASE("dag schedule grows the acyclicity weight") {
  const auto& f = small_fixture();
  TrainConfig plain = small_config();
  plain.epochs = 8;
  plain.weights.gamma.dag = 0.0;
  TrainConfig grown = plain;
  grown.weights.gamma.dag = 1.0;
  grown.dag_schedule.growth = 10.0;
  grown.dag_schedule.tolerance = 0.0;
  const auto a = training::train(f.syn.dataset, f.split, plain);
  const auto b = training::train(f.syn.dataset, f.split, grown);
  CHECK(b.history.epochs.back().acyclicity < a.history.epochs.back().acyclicity);
}

TEST_CASE("training errors") {
  const auto& f = small_fixture();
  data::SplitResult empty_target = f.split;
  empty_target.target.train.clear();
  CHECK_THROWS_AS(training::train(f.syn.dataset, empty_target, small_config()), Error);

  data::SplitResult empty_source = f.split;
  empty_source.source.train.clear();
  CHECK_THROWS_AS(training::train(f.syn.dataset, empty_source, small_config()), Error);
  TrainConfig no_source = small_config();
  no_source.ablation = Ablation::kNoSource;
  no_source.epochs = 1;
  CHECK_NOTHROW(training::train(f.syn.dataset, empty_source, no_source));

  TrainConfig bad = small_config();
  bad.epochs = 0;
  CHECK_THROWS_AS(training::train(f.syn.dataset, f.split, bad), ConfigError);

  TrainConfig blowup = small_config();
  blowup.init_range = 1e160;
  try {
    training::train(f.syn.dataset, f.split, blowup);
    FAIL("expected a non-finite loss");
  } catch (const NonFiniteError& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch 1 step 1") != std::string::npos);
    INFO(what);
    CHECK(what.find("loss term") != std::string::npos);
  }
}

TEST_CASE("probe with a zero discriminator") {
  const auto& f = small_fixture();
  ParameterSet p = model::init_params(
      {4, f.syn.dataset.users, f.syn.dataset.source_items, f.syn.dataset.target_items}, 5);
  for (const char* n : {names::kDiscHidden1, names::kDiscHidden2, names::kDiscOut}) {
    for (double& v : p.at(n).value.values()) v = 0.0;
  }
  const auto r = training::discriminator_probe(p, f.split);
  CHECK(r.accuracy == 0.5);
  CHECK(r.raw == 0.0);
  CHECK(r.examples % 2 == 0);
  CHECK(r.examples > 0);

  data::SplitResult none = f.split;
  none.source.test.clear();
  CHECK_THROWS_AS(training::discriminator_probe(p, none), Error);
}

TEST_CASE("history csv layout") {
  training::TrainHistory h;
  training::EpochRecord e;
  e.epoch = 1;
  e.target = 1.5;
  e.source = 2.0;
  e.domain = 0.25;
  e.causal = -0.125;
  e.reg = 3.0;
  e.acyclicity = 1e-7;
  e.disc_acc = 0.5;
  e.val_hr10 = 0.75;
  e.val_ndcg10 = 0.5;
  h.epochs.push_back(e);
  const auto path = std::filesystem::temp_directory_path() / "cdcor_history_test" / "history.csv";
  training::write_history(path, h, "prov test");
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() ==
        "# prov test\n"
        "epoch,L_t,L_s,L_c,L_cau,reg,acyclicity,disc_acc,val_hr10,val_ndcg10\n"
        "1,1.5,2,0.25,-0.125,3,1e-07,0.5,0.75,0.5\n");
  std::filesystem::remove_all(path.parent_path());
}

TEST_CASE("large a2p weight empties the preference to attribute block") {
  data::SynthConfig sc;
  sc.seed = 2;
  const auto syn = data::synth_generate(sc);
  const std::size_t k = sc.k;
  Matrix h(2 * k, sc.users);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t u = 0; u < sc.users; ++u) {
      h(i, u) = syn.truth.attributes(i, u);
      h(k + i, u) = syn.truth.preferences(i, u);
    }
  training::StructureConfig cfg;
  cfg.steps = 1500;
  cfg.gamma.a2p = 100.0;
  const Matrix a = training::fit_structure(h, cfg);
  double block = 0.0, total = 0.0;
  for (std::size_t i = 0; i < 2 * k; ++i)
    for (std::size_t j = 0; j < 2 * k; ++j) {
      total += std::abs(a(i, j));
      if (i >= k && j < k) block += std::abs(a(i, j));
    }
  REQUIRE(total > 0.0);
  CHECK(block < 0.01 * total);

  CHECK_THROWS_AS(training::fit_structure(Matrix(3, 5), cfg), ShapeError);
}
