#pragma once

// The cross-domain recommender network. All batched operations store one
// example per column: a batch of B users yields k x B embeddings.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdcor/causal.hpp"
#include "cdcor/data.hpp"
#include "cdcor/gradcheck.hpp"
#include "cdcor/matrix.hpp"
#include "cdcor/tape.hpp"

namespace cdcor::model {

using data::Domain;

struct ModelShape {
  std::size_t k = 16;
  std::size_t users = 0;
  std::size_t source_items = 0;
  std::size_t target_items = 0;

  std::size_t items(Domain d) const { return d == Domain::kSource ? source_items : target_items; }
  bool operator==(const ModelShape&) const = default;
};

// Registered parameter names.
namespace names {
std::string item(Domain d);        // k x n^d
std::string attribute(Domain d);   // k x m
std::string preference(Domain d);  // k x k
std::string fusion(Domain d);      // k x 2k
std::string head(Domain d);        // 2 x k
inline constexpr const char* kSharedEncoder = "shared.encoder";  // k x k
inline constexpr const char* kDiscHidden1 = "disc.hidden1";      // k x k
inline constexpr const char* kDiscHidden2 = "disc.hidden2";      // k x k
inline constexpr const char* kDiscOut = "disc.out";              // 2 x k
inline constexpr const char* kAdjacency = "causal.adjacency";    // 2k x 2k
}  // namespace names

// Uniform in [-init_range, init_range]; the adjacency starts at zero.
ParameterSet init_params(const ModelShape& shape, std::uint64_t seed, double init_range = 0.1);

// Recovers and validates the shape of a registered parameter set.
ModelShape shape_of(const ParameterSet& params);

Var embed_items(Tape& t, Domain d, const std::vector<std::size_t>& items);
Var embed_user_attributes(Tape& t, Domain d, const std::vector<std::size_t>& users);
Var encode_domain_specific(Tape& t, Domain d, Var u_att);
Var encode_domain_shared(Tape& t, Var u_att);
// Two ReLU hidden layers and a 2-unit sigmoid output. Row 0 is the source
// unit, row 1 the target unit.
Var discriminate(Tape& t, Var shared);
Var domain_loss(Tape& t, Var discriminator_output, Domain label);
Var fuse(Tape& t, Domain d, Var u, Var u_cau);
// 1 x B interaction probabilities, softmax(W_f (u^ct o i))[1].
Var predict(Tape& t, Domain d, Var u, Var u_cau, Var items);
Var interaction_loss(Tape& t, Var probabilities, const std::vector<double>& labels);

struct Batch {
  std::vector<std::size_t> users;
  std::vector<std::size_t> items;
  std::vector<double> labels;

  std::size_t size() const { return users.size(); }
  bool empty() const { return users.empty(); }
};

struct ForwardOptions {
  bool use_causal = true;
  bool strict_mask = false;
  double grl_scale = 1.0;
};

struct ForwardArtifacts {
  Var u_att;
  Var u;
  Var shared;
  Var causal;
  Var fused;
  Var items;
  Var logits;
  Var probability;
  Var discriminator;
};

// The adjacency as seen by the model: masked to the attribute -> preference
// block when `strict_mask` is set.
Var effective_adjacency(Tape& t, bool strict_mask);

ForwardArtifacts forward(Tape& t, Domain d, const Batch& batch, const ForwardOptions& options);

struct LossWeights {
  double source = 1.0;  // lambda_1
  double domain = 0.5;  // lambda_2
  double causal = 1.0;  // lambda_3
  double reg = 1e-5;    // lambda_4
  causal::CausalWeights gamma;
  double grl_scale = 1.0;
  bool use_causal = true;  // false: causal term dropped and u^cau = 0
  bool use_source = true;  // false: source batch, L_s and L_c dropped
  bool strict_mask = false;
};

struct LossBreakdown {
  double target = 0.0;
  double source = 0.0;
  double domain = 0.0;
  double causal = 0.0;
  double reg = 0.0;  // unweighted parameter norm
  double total = 0.0;
  causal::CausalLossTerms causal_terms;
  double discriminator_correct = 0.0;
  double discriminator_examples = 0.0;
};

struct TotalLoss {
  Var total;
  Var target_term;
  Var source_term;  // unset without the source domain
  Var domain_term;  // unset without the source domain
  Var causal_term;  // unset without the causal part
  Var reg_term;
  LossBreakdown breakdown;
  ForwardArtifacts target;
  ForwardArtifacts source;
};

TotalLoss total_loss(Tape& t, const Batch& target, const Batch& source, const LossWeights& w);

// Tape-free scoring against a read-only parameter snapshot. Probabilities
// are bitwise equal to those of `forward`.
class Scorer {
 public:
  Scorer(const ParameterSet& params, Domain d = Domain::kTarget, bool use_causal = true,
         bool strict_mask = false);

  double score(std::size_t user, std::size_t item) const;
  std::size_t users() const { return fused_.cols(); }
  std::size_t items() const { return items_.cols(); }

 private:
  std::size_t k_;
  Matrix fused_;
  Matrix items_;
  Matrix head_;
};

// u^c for the given users, k x N.
Matrix shared_preferences(const ParameterSet& params, Domain d,
                          const std::vector<std::size_t>& users);
// Discriminator output for k x N shared preferences, 2 x N.
Matrix discriminator_output(const ParameterSet& params, const Matrix& shared);

// Small fully-covered instance for gradient checking: k = 4, 6 users, 8
// items per domain, batches of 8 touching every user and item. Weights are
// positive so no ReLU sits at a kink; the adjacency is bounded away from 0.
struct ToyInstance {
  ParameterSet params;
  Batch target;
  Batch source;
};
ToyInstance make_toy_instance(std::uint64_t seed);

// Parameter blocks whose gradient passes back through the reversal layer.
std::vector<std::string> reversed_blocks();

// Finite-difference check of total_loss on every block. Blocks upstream of
// the reversal are differenced against L - (1 + s) * lambda_2 * L_c, the
// function whose true gradient the reversed backward pass computes.
GradCheckReport check_total_loss_gradients(
    ToyInstance& toy, const LossWeights& weights, double step = 1e-6,
    const std::function<void(ParameterSet&)>& corrupt = nullptr);

// Binary named-matrix container; see README for the layout.
void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                      const std::string& provenance);
struct Checkpoint {
  std::string provenance;
  ParameterSet params;
};
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace cdcor::model
