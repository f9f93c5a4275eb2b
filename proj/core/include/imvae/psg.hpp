// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"
#include "imvae/corpus.hpp"

#include <functional>

namespace imvae {

// ---------------------------------------------------------------------------
// Unified user-item bipartite graph over both domains. Items are re-indexed
// into one contiguous range: domain-X item i (1-based) -> i-1, domain-Y item
// j -> n_items_x + j - 1. Edge visibility follows the split:
//  - training users contribute their full retained history (incl. target),
//  - valid/test users contribute only their input slice (never the target),
//  - cold users contribute nothing in the removed domain.
// ---------------------------------------------------------------------------

struct UnifiedGraph {
  int n_users = 0;
  std::array<int, kNumDomains> n_items{0, 0};  // per-domain catalog sizes
  std::vector<std::vector<int>> user_adj;      // uid -> sorted unified item ids
  std::vector<std::vector<int>> item_adj;      // unified item id -> sorted uids
  std::vector<int> user_deg, item_deg;
  std::size_t n_edges = 0;

  int total_items() const { return n_items[kX] + n_items[kY]; }
  int unified(Domain d, int item) const {  // item is 1-based per-domain
    return (d == kX ? 0 : n_items[kX]) + item - 1;
  }
  Domain domain_of(int unified_item) const {
    return unified_item < n_items[kX] ? kX : kY;
  }
  int local_item(int unified_item) const {  // back to 1-based per-domain
    return unified_item < n_items[kX] ? unified_item + 1
                                      : unified_item - n_items[kX] + 1;
  }
};

UnifiedGraph build_unified_graph(const ExampleSet& set);

// Removes the given (user, unified item) edges; used for validation holdout.
UnifiedGraph remove_edges(const UnifiedGraph& g,
                          const std::vector<std::pair<int, int>>& edges);

// ---------------------------------------------------------------------------
// Embedding propagation: symmetric-normalized neighborhood averaging with no
// transforms or nonlinearities; the output is the mean of layers 0..K
// (layer 0 included). Isolated nodes pass through unchanged.
// ---------------------------------------------------------------------------

struct GraphEmbeddings {
  Mat users;  // n_users x dim
  Mat items;  // total_items x dim
};

GraphEmbeddings propagate_embeddings(const UnifiedGraph& g,
                                     const GraphEmbeddings& initial, int layers);

// ---------------------------------------------------------------------------
// Training: pairwise ranking loss with uniform negative sampling, Adam on the
// layer-0 embeddings, full propagation each step, periodic validation on a
// held-out share of training-user edges; returns the checkpoint with the best
// validation recall@Tp.
// ---------------------------------------------------------------------------

struct PsgConfig {
  int dim = 128;
  int layers = 3;
  int epochs = 1000;
  double lr = 1e-3;
  double weight_decay = 1e-4;  // L2 on layer-0 embeddings
  double val_fraction = 0.2;   // share of training-user edges held out
  int eval_every = 25;         // validation cadence (epochs)
  int recall_k = 40;           // Tp used for validation recall
  std::uint64_t seed = 17;

  void validate() const;
};

struct PsgTrainStats {
  std::vector<double> epoch_loss;
  std::vector<std::pair<int, double>> val_recall;  // (epoch, recall@k)
  double best_recall = 0.0;
  int best_epoch = -1;
};

using PsgLogFn = std::function<void(const std::string&)>;

GraphEmbeddings train_psg(const UnifiedGraph& graph, const ExampleSet& set,
                          const PsgConfig& cfg, PsgTrainStats* stats = nullptr,
                          const PsgLogFn& log = nullptr);

// ---------------------------------------------------------------------------
// Pseudo-sequence assembly. Layout: [PAD pad][original input slice][recalled
// items, score-descending], always exactly Tp entries. Recalls come from the
// user's target domain, exclude every item in the user's real history, and
// fall back to visible-degree popularity for users with no graph edges.
// ---------------------------------------------------------------------------

struct PseudoSequence {
  std::vector<int> items;               // length Tp, kPad padding
  std::vector<std::uint8_t> source;     // PseudoSource per slot
  int n_original = 0;
  int n_recalled = 0;
};

PseudoSequence generate_pseudo(const UnifiedGraph& graph,
                               const GraphEmbeddings& emb, const ExampleSet& set,
                               int uid, Domain d, int Tp);

// Fills ex.pseudo / ex.pseudo_src for every user and both domains; sets
// set.Tp. `randomize` replaces recall with a uniform random draw of the same
// exclusion discipline (ablation support).
void attach_pseudo_sequences(ExampleSet& set, const UnifiedGraph& graph,
                             const GraphEmbeddings& emb, int Tp);
void attach_random_pseudo_sequences(ExampleSet& set, int Tp, std::uint64_t seed);

// Checkpoint I/O. Config hash written alongside so downstream stages can
// detect mismatched inputs.
void save_psg(const GraphEmbeddings& emb, const UnifiedGraph& g,
              std::uint64_t config_hash, std::uint64_t examples_hash,
              const std::string& path);
struct PsgCheckpoint {
  GraphEmbeddings emb;
  std::array<int, kNumDomains> n_items{0, 0};
  int n_users = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t examples_hash = 0;
};
PsgCheckpoint load_psg(const std::string& path);

}  // namespace imvae
