// SPDX-License-Identifier: Apache-2.0
#include "imvae/psg.hpp"

#include "imvae/detail/binio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace imvae {

namespace {
constexpr char kPsgMagic[8] = {'I', 'M', 'V', 'A', 'E', 'P', 'G', '1'};
constexpr std::uint32_t kPsgVersion = 1;

void finalize_adjacency(UnifiedGraph& g) {
  g.user_deg.assign(g.n_users, 0);
  g.item_deg.assign(g.total_items(), 0);
  g.n_edges = 0;
  g.item_adj.assign(g.total_items(), {});
  for (int u = 0; u < g.n_users; ++u) {
    auto& adj = g.user_adj[u];
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    g.user_deg[u] = static_cast<int>(adj.size());
    g.n_edges += adj.size();
    for (int v : adj) g.item_adj[v].push_back(u);
  }
  for (auto& adj : g.item_adj) std::sort(adj.begin(), adj.end());
  for (int v = 0; v < g.total_items(); ++v) {
    g.item_deg[v] = static_cast<int>(g.item_adj[v].size());
  }
}

// Top-k indices of `score` in descending score order, ties broken by
// ascending index. Returns min(k, score.size()) entries.
std::vector<int> top_k(const std::vector<double>& score, int k) {
  std::vector<int> idx(score.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto cmp = [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  };
  const int kk = std::min<int>(k, static_cast<int>(idx.size()));
  std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(), cmp);
  idx.resize(kk);
  return idx;
}

}  // namespace

UnifiedGraph build_unified_graph(const ExampleSet& set) {
  UnifiedGraph g;
  g.n_users = set.n_users();
  g.n_items = set.n_items;
  g.user_adj.assign(g.n_users, {});
  for (const auto& ex : set.users) {
    const Role role = set.split.role[ex.uid];
    for (int d = 0; d < kNumDomains; ++d) {
      const auto dom = static_cast<Domain>(d);
      if (role == Role::kTrain) {
        for (int it : ex.interacted[d]) g.user_adj[ex.uid].push_back(g.unified(dom, it));
      } else {
        for (int it : ex.seq[d]) {
          if (it != kPad) g.user_adj[ex.uid].push_back(g.unified(dom, it));
        }
      }
    }
  }
  finalize_adjacency(g);
  return g;
}

UnifiedGraph remove_edges(const UnifiedGraph& g,
                          const std::vector<std::pair<int, int>>& edges) {
  UnifiedGraph out;
  out.n_users = g.n_users;
  out.n_items = g.n_items;
  out.user_adj = g.user_adj;
  for (const auto& [u, v] : edges) {
    auto& adj = out.user_adj[u];
    auto it = std::lower_bound(adj.begin(), adj.end(), v);
    if (it != adj.end() && *it == v) adj.erase(it);
  }
  finalize_adjacency(out);
  return out;
}

GraphEmbeddings propagate_embeddings(const UnifiedGraph& g,
                                     const GraphEmbeddings& initial, int layers) {
  if (layers < 0) throw ConfigError("propagation layers must be >= 0");
  if (initial.users.rows() != g.n_users ||
      initial.items.rows() != g.total_items()) {
    throw ConfigError("embedding shapes do not match graph");
  }
  const auto dim = initial.users.cols();
  Mat cur_u = initial.users, cur_i = initial.items;
  Mat sum_u = cur_u, sum_i = cur_i;
  for (int layer = 0; layer < layers; ++layer) {
    Mat next_u(g.n_users, dim), next_i(g.total_items(), dim);
    for (int u = 0; u < g.n_users; ++u) {
      if (g.user_deg[u] == 0) {  // isolated: pass through unchanged
        next_u.row(u) = cur_u.row(u);
        continue;
      }
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dim);
      const double du = std::sqrt(static_cast<double>(g.user_deg[u]));
      for (int v : g.user_adj[u]) {
        acc += cur_i.row(v) / std::sqrt(static_cast<double>(g.item_deg[v]));
      }
      next_u.row(u) = acc / du;
    }
    for (int v = 0; v < g.total_items(); ++v) {
      if (g.item_deg[v] == 0) {
        next_i.row(v) = cur_i.row(v);
        continue;
      }
      Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dim);
      const double dv = std::sqrt(static_cast<double>(g.item_deg[v]));
      for (int u : g.item_adj[v]) {
        acc += cur_u.row(u) / std::sqrt(static_cast<double>(g.user_deg[u]));
      }
      next_i.row(v) = acc / dv;
    }
    cur_u = std::move(next_u);
    cur_i = std::move(next_i);
    sum_u += cur_u;
    sum_i += cur_i;
  }
  GraphEmbeddings out;
  out.users = sum_u / static_cast<double>(layers + 1);
  out.items = sum_i / static_cast<double>(layers + 1);
  return out;
}

void PsgConfig::validate() const {
  if (dim <= 0) throw ConfigError("psg.dim must be positive");
  if (layers < 0) throw ConfigError("psg.layers must be >= 0");
  if (epochs <= 0) throw ConfigError("psg.epochs must be positive");
  if (!(lr > 0.0)) throw ConfigError("psg.lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("psg.weight_decay must be >= 0");
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw ConfigError("psg.val_fraction must be in [0,1)");
  }
  if (recall_k <= 0) throw ConfigError("psg.recall_k must be positive");
  if (eval_every <= 0) throw ConfigError("psg.eval_every must be positive");
}

namespace {

struct AdamState {
  Mat m, v;
  int t = 0;
  explicit AdamState(Eigen::Index rows, Eigen::Index cols)
      : m(Mat::Zero(rows, cols)), v(Mat::Zero(rows, cols)) {}
  void step(Mat& w, const Mat& g, double lr) {
    ++t;
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    w.array() -= lr * (m.array() / c1) /
                 ((v.array() / c2).sqrt() + eps);
  }
};

// Macro recall@k over (user, domain) groups of held-out edges.
double validation_recall(const UnifiedGraph& g_train, const GraphEmbeddings& P,
                         const std::vector<std::vector<int>>& held_by_user,
                         const UnifiedGraph& full, int k) {
  double sum = 0.0;
  int groups = 0;
  for (int u = 0; u < full.n_users; ++u) {
    if (held_by_user[u].empty()) continue;
    for (int d = 0; d < kNumDomains; ++d) {
      const auto dom = static_cast<Domain>(d);
      std::vector<int> held;
      for (int v : held_by_user[u]) {
        if (full.domain_of(v) == dom) held.push_back(v);
      }
      if (held.empty()) continue;
      const int lo = dom == kX ? 0 : full.n_items[kX];
      const int hi = lo + full.n_items[d];
      const auto& visible = g_train.user_adj[u];
      std::vector<int> cand;
      std::vector<double> score;
      cand.reserve(hi - lo);
      for (int v = lo; v < hi; ++v) {
        if (std::binary_search(visible.begin(), visible.end(), v)) continue;
        cand.push_back(v);
        score.push_back(P.users.row(u).dot(P.items.row(v)));
      }
      const auto top = top_k(score, k);
      int hits = 0;
      for (int idx : top) {
        if (std::find(held.begin(), held.end(), cand[idx]) != held.end()) ++hits;
      }
      sum += static_cast<double>(hits) / static_cast<double>(held.size());
      ++groups;
    }
  }
  return groups ? sum / groups : 0.0;
}

}  // namespace

GraphEmbeddings train_psg(const UnifiedGraph& graph, const ExampleSet& set,
                          const PsgConfig& cfg, PsgTrainStats* stats,
                          const PsgLogFn& log) {
  cfg.validate();
  // Supervision edges: training users only.
  std::vector<std::pair<int, int>> train_edges;
  for (int u = 0; u < graph.n_users; ++u) {
    if (set.split.role[u] != Role::kTrain) continue;
    for (int v : graph.user_adj[u]) train_edges.emplace_back(u, v);
  }
  if (train_edges.empty()) throw DataError("graph has no training-user edges");

  Rng split_rng(derive_seed(cfg.seed, "psg_val_split"));
  split_rng.shuffle(train_edges);
  const auto n_val = static_cast<std::size_t>(
      std::llround(cfg.val_fraction * static_cast<double>(train_edges.size())));
  std::vector<std::pair<int, int>> val_edges(train_edges.begin(),
                                             train_edges.begin() + n_val);
  std::vector<std::pair<int, int>> fit_edges(train_edges.begin() + n_val,
                                             train_edges.end());
  if (fit_edges.empty()) throw DataError("validation holdout consumed all edges");
  const UnifiedGraph g_train = remove_edges(graph, val_edges);
  std::vector<std::vector<int>> held_by_user(graph.n_users);
  for (const auto& [u, v] : val_edges) held_by_user[u].push_back(v);

  // Layer-0 embeddings, N(0, 0.1) init.
  Rng init_rng(derive_seed(cfg.seed, "psg_init"));
  GraphEmbeddings e0;
  e0.users = Mat::NullaryExpr(graph.n_users, cfg.dim,
                              [&](Eigen::Index, Eigen::Index) { return 0.1 * init_rng.normal(); });
  e0.items = Mat::NullaryExpr(graph.total_items(), cfg.dim,
                              [&](Eigen::Index, Eigen::Index) { return 0.1 * init_rng.normal(); });

  AdamState adam_u(graph.n_users, cfg.dim), adam_i(graph.total_items(), cfg.dim);
  GraphEmbeddings best = propagate_embeddings(g_train, e0, cfg.layers);
  double best_recall = validation_recall(g_train, best, held_by_user, graph,
                                         cfg.recall_k);
  int best_epoch = 0;
  if (stats) stats->val_recall.emplace_back(0, best_recall);

  const auto n_fit = fit_edges.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const GraphEmbeddings P = propagate_embeddings(g_train, e0, cfg.layers);
    Rng neg_rng(derive_seed(cfg.seed, "psg_neg", static_cast<std::uint64_t>(epoch)));
    Mat gu = Mat::Zero(graph.n_users, cfg.dim);
    Mat gi = Mat::Zero(graph.total_items(), cfg.dim);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n_fit);
    for (const auto& [u, pos] : fit_edges) {
      const Domain dom = graph.domain_of(pos);
      const int lo = dom == kX ? 0 : graph.n_items[kX];
      const int n_dom = graph.n_items[dom];
      const auto& visible = g_train.user_adj[u];
      int neg = -1;
      for (int tries = 0; tries < 64; ++tries) {
        const int c = lo + neg_rng.below_int(n_dom);
        if (!std::binary_search(visible.begin(), visible.end(), c) && c != pos) {
          neg = c;
          break;
        }
      }
      if (neg < 0) continue;  // user saw nearly the whole catalog
      const double delta =
          P.users.row(u).dot(P.items.row(pos)) - P.users.row(u).dot(P.items.row(neg));
      // -log sigmoid(delta), numerically stable.
      loss += inv_n * (delta > 0 ? std::log1p(std::exp(-delta))
                                 : -delta + std::log1p(std::exp(delta)));
      const double dd = inv_n * (1.0 / (1.0 + std::exp(-delta)) - 1.0);  // dL/ddelta
      gu.row(u) += dd * (P.items.row(pos) - P.items.row(neg));
      gi.row(pos) += dd * P.users.row(u);
      gi.row(neg) -= dd * P.users.row(u);
    }
    // Propagation is linear with a symmetric operator, so the backward pass is
    // the same propagation applied to the output gradients.
    UnifiedGraph const& g = g_train;
    GraphEmbeddings grad_out{std::move(gu), std::move(gi)};
    GraphEmbeddings grad0 = propagate_embeddings(g, grad_out, cfg.layers);
    grad0.users += cfg.weight_decay * e0.users;
    grad0.items += cfg.weight_decay * e0.items;
    adam_u.step(e0.users, grad0.users, cfg.lr);
    adam_i.step(e0.items, grad0.items, cfg.lr);
    if (stats) stats->epoch_loss.push_back(loss);

    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      const GraphEmbeddings Pv = propagate_embeddings(g_train, e0, cfg.layers);
      const double rec =
          validation_recall(g_train, Pv, held_by_user, graph, cfg.recall_k);
      if (stats) stats->val_recall.emplace_back(epoch, rec);
      if (log) {
        std::ostringstream os;
        os << "psg epoch " << epoch << " loss " << loss << " recall@"
           << cfg.recall_k << " " << rec;
        log(os.str());
      }
      if (rec > best_recall) {
        best_recall = rec;
        best_epoch = epoch;
        best = Pv;
      }
    }
  }
  if (stats) {
    stats->best_recall = best_recall;
    stats->best_epoch = best_epoch;
  }
  return best;
}

PseudoSequence generate_pseudo(const UnifiedGraph& graph,
                               const GraphEmbeddings& emb, const ExampleSet& set,
                               int uid, Domain d, int Tp) {
  if (Tp <= 0) throw ConfigError("pseudo length Tp must be positive");
  const UserExample& ex = set.at(uid);
  PseudoSequence out;
  out.items.assign(Tp, kPad);
  out.source.assign(Tp, static_cast<std::uint8_t>(PseudoSource::kPad));

  // Original input slice (non-PAD, order preserved, most recent kept).
  std::vector<int> orig;
  for (int it : ex.seq[d]) {
    if (it != kPad) orig.push_back(it);
  }
  if (static_cast<int>(orig.size()) > Tp) {
    orig.erase(orig.begin(), orig.end() - Tp);
  }
  out.n_original = static_cast<int>(orig.size());
  const int n_rec_wanted = Tp - out.n_original;

  // Candidates: domain catalog minus the user's full real history.
  const auto& excl = ex.interacted[d];
  std::vector<int> cand;  // 1-based local item ids
  cand.reserve(set.n_items[d]);
  for (int it = 1; it <= set.n_items[d]; ++it) {
    if (!std::binary_search(excl.begin(), excl.end(), it)) cand.push_back(it);
  }

  std::vector<int> recalled;
  if (n_rec_wanted > 0 && !cand.empty()) {
    std::vector<double> score(cand.size());
    if (graph.user_deg[uid] == 0) {
      // No graph evidence for this user: fall back to visible popularity.
      for (std::size_t i = 0; i < cand.size(); ++i) {
        score[i] = static_cast<double>(graph.item_deg[graph.unified(d, cand[i])]);
      }
    } else {
      for (std::size_t i = 0; i < cand.size(); ++i) {
        score[i] = emb.users.row(uid).dot(emb.items.row(graph.unified(d, cand[i])));
      }
    }
    for (int idx : top_k(score, n_rec_wanted)) recalled.push_back(cand[idx]);
  }
  out.n_recalled = static_cast<int>(recalled.size());

  const int pad = Tp - out.n_original - out.n_recalled;
  int pos = pad;
  for (int it : orig) {
    out.items[pos] = it;
    out.source[pos] = static_cast<std::uint8_t>(PseudoSource::kOriginal);
    ++pos;
  }
  for (int it : recalled) {
    out.items[pos] = it;
    out.source[pos] = static_cast<std::uint8_t>(PseudoSource::kRecalled);
    ++pos;
  }
  return out;
}

void attach_pseudo_sequences(ExampleSet& set, const UnifiedGraph& graph,
                             const GraphEmbeddings& emb, int Tp) {
  set.Tp = Tp;
  for (auto& ex : set.users) {
    for (int d = 0; d < kNumDomains; ++d) {
      auto ps = generate_pseudo(graph, emb, set, ex.uid, static_cast<Domain>(d), Tp);
      ex.pseudo[d] = std::move(ps.items);
      ex.pseudo_src[d] = std::move(ps.source);
    }
  }
}

void attach_random_pseudo_sequences(ExampleSet& set, int Tp, std::uint64_t seed) {
  if (Tp <= 0) throw ConfigError("pseudo length Tp must be positive");
  set.Tp = Tp;
  for (auto& ex : set.users) {
    for (int d = 0; d < kNumDomains; ++d) {
      const auto& excl = ex.interacted[d];
      std::vector<int> cand;
      for (int it = 1; it <= set.n_items[d]; ++it) {
        if (!std::binary_search(excl.begin(), excl.end(), it)) cand.push_back(it);
      }
      Rng rng(derive_seed(seed, "random_pseudo", static_cast<std::uint64_t>(ex.uid),
                          static_cast<std::uint64_t>(d)));
      const int n = std::min<int>(Tp, static_cast<int>(cand.size()));
      const auto pick = rng.sample_without_replacement(static_cast<int>(cand.size()), n);
      auto& pseudo = ex.pseudo[d];
      auto& src = ex.pseudo_src[d];
      pseudo.assign(Tp, kPad);
      src.assign(Tp, static_cast<std::uint8_t>(PseudoSource::kPad));
      for (int i = 0; i < n; ++i) {
        pseudo[Tp - n + i] = cand[pick[i]];
        src[Tp - n + i] = static_cast<std::uint8_t>(PseudoSource::kRecalled);
      }
    }
  }
}

void save_psg(const GraphEmbeddings& emb, const UnifiedGraph& g,
              std::uint64_t config_hash, std::uint64_t examples_hash,
              const std::string& path) {
  detail::BinWriter w(path, kPsgMagic, kPsgVersion);
  w.u64(config_hash);
  w.u64(examples_hash);
  w.i32(g.n_users);
  for (int d = 0; d < kNumDomains; ++d) w.i32(g.n_items[d]);
  w.mat(emb.users);
  w.mat(emb.items);
  w.close();
}

PsgCheckpoint load_psg(const std::string& path) {
  detail::BinReader r(path, kPsgMagic, kPsgVersion, "train-psg");
  PsgCheckpoint ck;
  ck.config_hash = r.u64();
  ck.examples_hash = r.u64();
  ck.n_users = r.i32();
  for (int d = 0; d < kNumDomains; ++d) ck.n_items[d] = r.i32();
  ck.emb.users = r.mat();
  ck.emb.items = r.mat();
  return ck;
}

}  // namespace imvae
