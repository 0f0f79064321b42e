#pragma once

// Linear structural causal model over the 2k nodes [attributes ; preferences].
// Node i < k is latent attribute i, node k + j is preference j, and A(i, j)
// is the effect of node i on node j.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdcor/matrix.hpp"
#include "cdcor/tape.hpp"

namespace cdcor::causal {

// Penalty weights of the causal objective (gamma_1..gamma_4).
struct CausalWeights {
  double dag = 1.0;       // acyclicity
  double a2p = 1.0;       // L1 on preference -> attribute edges
  double pnr = 0.1;       // preference nodes are not roots
  double sparsity = 0.01; // L1 on all of A
};

inline constexpr double kPnrEpsilon = 1e-8;

struct CausalLossTerms {
  double reconstruction = 0.0;
  double dag = 0.0;
  double a2p = 0.0;
  double pnr = 0.0;
  double sparsity = 0.0;
  double total = 0.0;  // weighted sum
};

struct CausalLossVars {
  Var total;
  Var reconstruction;
  Var dag;
  Var a2p;
  Var pnr;
  Var sparsity;

  CausalLossTerms values() const;
};

// A^T H for a 2k x N batch of samples stored as columns.
Matrix scm_reconstruct(const Matrix& adjacency, const Matrix& samples);

// Causal objective over one or more 2k x n_b sample blocks (columns are
// samples). Reconstruction is averaged over all samples.
CausalLossVars causal_loss(Tape& tape, Var adjacency, std::span<const Var> sample_blocks,
                           const CausalWeights& weights);
CausalLossTerms causal_loss(const Matrix& adjacency, const Matrix& samples,
                            const CausalWeights& weights);

// u_cau: the preference half of A^T [u_att ; 0], i.e. A[0:k, k:2k]^T u_att.
// `attributes` is k x N.
Var infer_causal_preference(Tape& tape, Var adjacency, Var attributes);
Matrix infer_causal_preference(const Matrix& adjacency, const Matrix& attributes);

// 1 on the attribute -> preference block, 0 elsewhere.
Matrix attribute_to_preference_mask(std::size_t k);

using Edge = std::pair<std::size_t, std::size_t>;

struct WeightedEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  double weight = 0.0;
};

struct StructureMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ExtractedGraph {
  // Sorted by |weight| descending, then (from, to).
  std::vector<WeightedEdge> edges;
  std::optional<StructureMetrics> metrics;
};

// Edges with |A(i, j)| >= threshold; directed precision/recall/F1 against
// `reference` when given.
ExtractedGraph extract_graph(const Matrix& adjacency, double threshold,
                             const std::vector<Edge>* reference = nullptr);

// Edge list `i,j,weight` plus the acyclicity value and threshold used.
void write_graph(const std::filesystem::path& path, const Matrix& adjacency, double threshold,
                 const std::string& provenance);

}  // namespace cdcor::causal
