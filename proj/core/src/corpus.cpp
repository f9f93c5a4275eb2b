// SPDX-License-Identifier: Apache-2.0
#include "imvae/corpus.hpp"

#include "imvae/detail/binio.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace imvae {

namespace {

constexpr char kExMagic[8] = {'I', 'M', 'V', 'A', 'E', 'E', 'X', '1'};
constexpr std::uint32_t kExVersion = 2;

bool parse_double(std::string_view s, double& out) {
  // std::from_chars<double> handles leading ws poorly; trim first.
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool parse_i64(std::string_view s, std::int64_t& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return std::string(s);
}

InteractionLog finalize_log(std::vector<RawRecord> records, Domain domain,
                            std::size_t malformed, std::size_t parsed_lines,
                            const std::string& origin,
                            const std::vector<std::int64_t>& bad_lines) {
  if (parsed_lines == 0) {
    throw DataError("ratings file has no data lines: " + origin);
  }
  if (malformed * 100 > parsed_lines) {  // > 1% malformed is fatal
    std::ostringstream msg;
    msg << origin << ": " << malformed << "/" << parsed_lines
        << " malformed lines (>1%); first bad lines:";
    for (std::size_t i = 0; i < bad_lines.size() && i < 5; ++i)
      msg << " " << bad_lines[i];
    throw DataError(msg.str());
  }
  if (records.empty()) {
    throw DataError("ratings file has no valid records: " + origin);
  }

  std::stable_sort(records.begin(), records.end(),
                   [](const RawRecord& a, const RawRecord& b) {
                     if (a.user != b.user) return a.user < b.user;
                     if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                     return a.line < b.line;
                   });

  // Keep the first (chronological) occurrence of each (user,item) pair; this
  // also removes exact repeated rows and guarantees a user never re-interacts
  // with an item later in their sequence.
  std::vector<RawRecord> dedup;
  dedup.reserve(records.size());
  std::size_t duplicates = 0;
  std::set<std::pair<std::string, std::string>> seen;
  for (auto& r : records) {
    if (seen.emplace(r.user, r.item).second) {
      dedup.push_back(std::move(r));
    } else {
      ++duplicates;
    }
  }

  InteractionLog log;
  log.domain = domain;
  log.records = std::move(dedup);
  auto& st = log.stats;
  std::unordered_set<std::string> users, items;
  for (const auto& r : log.records) {
    users.insert(r.user);
    items.insert(r.item);
  }
  st.n_users = users.size();
  st.n_items = items.size();
  st.n_records = log.records.size();
  st.n_malformed = malformed;
  st.n_duplicates = duplicates;
  st.density = st.n_users && st.n_items
                   ? static_cast<double>(st.n_records) /
                         (static_cast<double>(st.n_users) * static_cast<double>(st.n_items))
                   : 0.0;
  st.mean_seq_len =
      st.n_users ? static_cast<double>(st.n_records) / static_cast<double>(st.n_users) : 0.0;
  return log;
}

InteractionLog ingest_stream(std::istream& in, Domain domain, const std::string& origin) {
  std::vector<RawRecord> records;
  std::vector<std::int64_t> bad_lines;
  std::size_t malformed = 0, parsed_lines = 0;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    ++parsed_lines;
    // Split into exactly 4 comma-separated fields.
    std::string_view sv(line);
    std::array<std::string_view, 4> fields;
    int nf = 0;
    std::size_t start = 0;
    bool ok = true;
    for (std::size_t i = 0; i <= sv.size(); ++i) {
      if (i == sv.size() || sv[i] == ',') {
        if (nf >= 4) { ok = false; break; }
        fields[nf++] = sv.substr(start, i - start);
        start = i + 1;
      }
    }
    RawRecord rec;
    if (ok && nf == 4) {
      rec.user = trim(fields[0]);
      rec.item = trim(fields[1]);
      ok = !rec.user.empty() && !rec.item.empty() &&
           parse_double(fields[2], rec.rating) && parse_i64(fields[3], rec.timestamp);
    } else {
      ok = false;
    }
    if (!ok) {
      ++malformed;
      if (bad_lines.size() < 5) bad_lines.push_back(lineno);
      continue;
    }
    rec.line = lineno;
    records.push_back(std::move(rec));
  }
  return finalize_log(std::move(records), domain, malformed, parsed_lines, origin,
                      bad_lines);
}

}  // namespace

InteractionLog ingest_ratings(const std::string& path, Domain domain) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file: " + path);
  return ingest_stream(in, domain, path);
}

InteractionLog ingest_ratings_text(const std::string& text, Domain domain,
                                   const std::string& origin) {
  std::istringstream in(text);
  return ingest_stream(in, domain, origin);
}

InteractionLog downsample_records(const InteractionLog& log, double density,
                                  std::uint64_t seed) {
  if (!(density > 0.0) || density > 1.0) {
    throw ConfigError("downsample density must be in (0,1]");
  }
  if (density == 1.0) return log;
  const int n = static_cast<int>(log.records.size());
  const int keep = std::max<int>(1, static_cast<int>(std::llround(density * n)));
  Rng rng(derive_seed(seed, "downsample", static_cast<std::uint64_t>(log.domain)));
  std::vector<int> chosen = rng.sample_without_replacement(n, keep);
  std::sort(chosen.begin(), chosen.end());
  std::vector<RawRecord> kept;
  kept.reserve(chosen.size());
  for (int idx : chosen) kept.push_back(log.records[idx]);
  // Re-finalize to refresh stats (order already sorted; dedup is a no-op).
  return finalize_log(std::move(kept), log.domain, 0, kept.size(),
                      "<downsampled>", {});
}

// ---------------------------------------------------------------------------

Corpus build_corpus(const InteractionLog& log_x, const InteractionLog& log_y) {
  if (log_x.domain == log_y.domain) {
    throw ConfigError("build_corpus: both logs claim the same domain");
  }
  Corpus c;
  std::set<std::string> users;
  for (const auto& r : log_x.records) users.insert(r.user);
  for (const auto& r : log_y.records) users.insert(r.user);
  c.user_ids.assign(users.begin(), users.end());
  std::unordered_map<std::string, int> uid;
  for (int i = 0; i < static_cast<int>(c.user_ids.size()); ++i) uid[c.user_ids[i]] = i;

  const InteractionLog* logs[2] = {nullptr, nullptr};
  logs[log_x.domain] = &log_x;
  logs[log_y.domain] = &log_y;
  for (int d = 0; d < kNumDomains; ++d) {
    std::set<std::string> items;
    for (const auto& r : logs[d]->records) items.insert(r.item);
    c.item_ids[d].assign(items.begin(), items.end());
    std::unordered_map<std::string, int> iid;  // 1-based; 0 is PAD
    for (int i = 0; i < static_cast<int>(c.item_ids[d].size()); ++i)
      iid[c.item_ids[d][i]] = i + 1;
    c.seqs[d].assign(c.user_ids.size(), {});
    for (const auto& r : logs[d]->records) {
      c.seqs[d][uid[r.user]].push_back(iid[r.item]);
    }
  }
  return c;
}

std::uint64_t Corpus::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  const std::uint64_t nu = user_ids.size();
  h = fnv1a_bytes(&nu, 8, h);
  for (const auto& s : user_ids) h = fnv1a(s, h);
  for (int d = 0; d < kNumDomains; ++d) {
    const std::uint64_t ni = item_ids[d].size();
    h = fnv1a_bytes(&ni, 8, h);
    for (const auto& s : item_ids[d]) h = fnv1a(s, h);
    for (const auto& seq : seqs[d]) {
      const std::uint64_t n = seq.size();
      h = fnv1a_bytes(&n, 8, h);
      if (n) h = fnv1a_bytes(seq.data(), n * sizeof(int), h);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

namespace {

// Largest-remainder allocation of n into the three roles.
std::array<int, 3> allocate_roles(int n, const SplitRatios& r) {
  const double raw[3] = {r.train * n, r.valid * n, r.test * n};
  std::array<int, 3> out{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    out[i] = static_cast<int>(std::floor(raw[i]));
    assigned += out[i];
  }
  // Hand out the remainder by descending fractional part; ties favor
  // train, then valid, then test.
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return raw[a] - std::floor(raw[a]) > raw[b] - std::floor(raw[b]);
  });
  for (int i = 0; assigned < n; ++i) {
    ++out[order[i % 3]];
    ++assigned;
  }
  return out;
}

}  // namespace

UserSplit split_users(const Corpus& corpus, const SplitRatios& ratios,
                      double overlap_ratio, std::uint64_t seed) {
  const double sum = ratios.train + ratios.valid + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train <= 0.0 || ratios.valid < 0.0 ||
      ratios.test < 0.0) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  if (overlap_ratio < 0.0 || overlap_ratio > 1.0) {
    throw ConfigError("overlap ratio must be in [0,1]");
  }
  const int n = corpus.n_users();
  UserSplit split;
  split.role.assign(n, Role::kTrain);
  split.overlapping.assign(n, 0);
  split.dropped_domain.assign(n, kNoDomain);
  split.cold_domain.assign(n, kNoDomain);
  split.seed = seed;
  split.overlap_ratio = overlap_ratio;

  // Strata: 0 = X-only, 1 = Y-only, 2 = overlapping.
  std::array<std::vector<int>, 3> strata;
  for (int u = 0; u < n; ++u) {
    const bool in_x = corpus.present(kX, u);
    const bool in_y = corpus.present(kY, u);
    if (in_x && in_y) {
      split.overlapping[u] = 1;
      strata[2].push_back(u);
    } else if (in_x) {
      strata[0].push_back(u);
    } else {
      strata[1].push_back(u);
    }
  }

  for (int s = 0; s < 3; ++s) {
    auto& users = strata[s];
    Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(s)));
    rng.shuffle(users);
    const auto counts = allocate_roles(static_cast<int>(users.size()), ratios);
    int pos = 0;
    for (int role = 0; role < 3; ++role) {
      for (int i = 0; i < counts[role]; ++i, ++pos) {
        split.role[users[pos]] = static_cast<Role>(role);
      }
    }
  }

  // Overlap-ratio simulation: affects training users only.
  if (overlap_ratio < 1.0) {
    std::vector<int> pool;
    for (int u : strata[2]) {
      if (split.role[u] == Role::kTrain) pool.push_back(u);
    }
    std::sort(pool.begin(), pool.end());
    Rng rng(derive_seed(seed, "overlap_drop"));
    rng.shuffle(pool);
    const auto n_drop = static_cast<std::size_t>(
        std::llround((1.0 - overlap_ratio) * static_cast<double>(pool.size())));
    for (std::size_t i = 0; i < n_drop; ++i) {
      split.dropped_domain[pool[i]] =
          static_cast<std::uint8_t>(rng.below(kNumDomains));
    }
  }
  return split;
}

void simulate_cold_start(const Corpus& corpus, UserSplit& split,
                         double cold_fraction, std::uint64_t seed) {
  if (cold_fraction < 0.0 || cold_fraction > 1.0) {
    throw ConfigError("cold-start fraction must be in [0,1]");
  }
  split.cold_fraction = cold_fraction;
  if (cold_fraction == 0.0) return;
  std::vector<int> pool;
  for (int u = 0; u < corpus.n_users(); ++u) {
    if (split.overlapping[u] &&
        (split.role[u] == Role::kValid || split.role[u] == Role::kTest)) {
      pool.push_back(u);
    }
  }
  Rng rng(derive_seed(seed, "cold_start"));
  rng.shuffle(pool);
  const auto n_cold = static_cast<std::size_t>(
      std::llround(cold_fraction * static_cast<double>(pool.size())));
  for (std::size_t i = 0; i < n_cold; ++i) {
    split.cold_domain[pool[i]] = static_cast<std::uint8_t>(rng.below(kNumDomains));
  }
}

// ---------------------------------------------------------------------------

ExampleSet build_examples(const Corpus& corpus, const UserSplit& split, int T) {
  if (T <= 0) throw ConfigError("sequence window T must be positive");
  const int n = corpus.n_users();
  if (static_cast<int>(split.role.size()) != n) {
    throw ConfigError("split does not match corpus user count");
  }
  ExampleSet set;
  set.T = T;
  set.Tp = 0;
  set.user_ids = corpus.user_ids;
  for (int d = 0; d < kNumDomains; ++d) {
    set.item_ids[d] = corpus.item_ids[d];
    set.n_items[d] = corpus.n_items(static_cast<Domain>(d));
  }
  set.split = split;
  set.corpus_hash = corpus.fingerprint();
  set.users.resize(n);

  for (int u = 0; u < n; ++u) {
    UserExample& ex = set.users[u];
    ex.uid = u;
    for (int d = 0; d < kNumDomains; ++d) {
      ex.seq[d].assign(T, kPad);
      const auto& full = corpus.seqs[d][u];
      if (full.empty()) continue;
      if (split.dropped_domain[u] == d) continue;  // history erased for training
      ex.interacted[d] = full;
      std::sort(ex.interacted[d].begin(), ex.interacted[d].end());
      ex.target[d] = full.back();
      if (split.cold_domain[u] == d) continue;  // keep only the target
      const int len = static_cast<int>(full.size()) - 1;
      const int use = std::min(len, T);
      ex.true_len[d] = use;
      for (int i = 0; i < use; ++i) {
        ex.seq[d][T - use + i] = full[len - use + i];
      }
    }
  }
  tag_user_groups(set);
  return set;
}

double tailed_threshold(const ExampleSet& set, Domain d) {
  std::vector<int> lens;
  for (const auto& ex : set.users) {
    if (ex.true_len[d] >= 1) lens.push_back(ex.true_len[d]);
  }
  if (lens.empty()) return 0.0;
  std::sort(lens.begin(), lens.end());
  const auto m = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(lens.size()))));
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) sum += lens[i];
  return sum / static_cast<double>(m);
}

void tag_user_groups(ExampleSet& set) {
  const double thr[2] = {tailed_threshold(set, kX), tailed_threshold(set, kY)};
  for (auto& ex : set.users) {
    ex.tags = 0;
    for (int d = 0; d < kNumDomains; ++d) {
      if (ex.true_len[d] >= 1 && static_cast<double>(ex.true_len[d]) < thr[d]) {
        ex.tags |= (d == kX ? kTagTailedX : kTagTailedY);
      }
    }
    if (set.split.is_cold(ex.uid)) ex.tags |= kTagCold;
    if (set.split.overlapping[ex.uid]) ex.tags |= kTagOverlap;
  }
}

// ---------------------------------------------------------------------------
// Store.
// ---------------------------------------------------------------------------

void save_examples(const ExampleSet& set, const std::string& path) {
  detail::BinWriter w(path, kExMagic, kExVersion);
  w.i32(set.T);
  w.i32(set.Tp);
  w.u64(set.corpus_hash);
  for (int d = 0; d < kNumDomains; ++d) w.i32(set.n_items[d]);
  w.vec_str(set.user_ids);
  for (int d = 0; d < kNumDomains; ++d) w.vec_str(set.item_ids[d]);
  const auto& sp = set.split;
  w.u64(sp.seed);
  w.f64(sp.overlap_ratio);
  w.f64(sp.cold_fraction);
  w.u64(sp.role.size());
  for (Role r : sp.role) w.u8(static_cast<std::uint8_t>(r));
  w.vec_u8(sp.overlapping);
  w.vec_u8(sp.dropped_domain);
  w.vec_u8(sp.cold_domain);
  w.u64(set.users.size());
  for (const auto& ex : set.users) {
    w.i32(ex.uid);
    w.u8(ex.tags);
    for (int d = 0; d < kNumDomains; ++d) {
      w.vec_i32(ex.seq[d]);
      w.i32(ex.true_len[d]);
      w.vec_i32(ex.pseudo[d]);
      w.vec_u8(ex.pseudo_src[d]);
      w.i32(ex.target[d]);
      w.vec_i32(ex.interacted[d]);
    }
  }
  w.close();
}

ExampleSet load_examples(const std::string& path) {
  detail::BinReader r(path, kExMagic, kExVersion, "prepare");
  ExampleSet set;
  set.T = r.i32();
  set.Tp = r.i32();
  set.corpus_hash = r.u64();
  for (int d = 0; d < kNumDomains; ++d) set.n_items[d] = r.i32();
  set.user_ids = r.vec_str();
  for (int d = 0; d < kNumDomains; ++d) set.item_ids[d] = r.vec_str();
  auto& sp = set.split;
  sp.seed = r.u64();
  sp.overlap_ratio = r.f64();
  sp.cold_fraction = r.f64();
  const std::uint64_t nr = r.u64();
  sp.role.resize(nr);
  for (auto& role : sp.role) role = static_cast<Role>(r.u8());
  sp.overlapping = r.vec_u8();
  sp.dropped_domain = r.vec_u8();
  sp.cold_domain = r.vec_u8();
  const std::uint64_t nu = r.u64();
  set.users.resize(nu);
  for (auto& ex : set.users) {
    ex.uid = r.i32();
    ex.tags = r.u8();
    for (int d = 0; d < kNumDomains; ++d) {
      ex.seq[d] = r.vec_i32();
      ex.true_len[d] = r.i32();
      ex.pseudo[d] = r.vec_i32();
      ex.pseudo_src[d] = r.vec_u8();
      ex.target[d] = r.i32();
      ex.interacted[d] = r.vec_i32();
    }
  }
  return set;
}

void write_split_manifest(const ExampleSet& set, const std::string& path) {
  nlohmann::json j;
  j["n_users"] = set.n_users();
  j["n_items_x"] = set.n_items[kX];
  j["n_items_y"] = set.n_items[kY];
  j["T"] = set.T;
  j["Tp"] = set.Tp;
  j["corpus_hash"] = hex64(set.corpus_hash);
  j["split_seed"] = set.split.seed;
  j["overlap_ratio"] = set.split.overlap_ratio;
  j["cold_fraction"] = set.split.cold_fraction;
  int counts[3] = {0, 0, 0};
  int n_overlap = 0, n_cold[2] = {0, 0}, n_dropped = 0, n_tailed[2] = {0, 0};
  for (const auto& ex : set.users) {
    ++counts[static_cast<int>(set.split.role[ex.uid])];
    if (set.split.overlapping[ex.uid]) ++n_overlap;
    if (set.split.cold_domain[ex.uid] != kNoDomain) ++n_cold[set.split.cold_domain[ex.uid]];
    if (set.split.dropped_domain[ex.uid] != kNoDomain) ++n_dropped;
    for (int d = 0; d < kNumDomains; ++d) {
      if (ex.tailed(static_cast<Domain>(d))) ++n_tailed[d];
    }
  }
  j["n_train"] = counts[0];
  j["n_valid"] = counts[1];
  j["n_test"] = counts[2];
  j["n_overlapping"] = n_overlap;
  j["n_overlap_dropped"] = n_dropped;
  j["n_cold_x"] = n_cold[kX];
  j["n_cold_y"] = n_cold[kY];
  j["n_tailed_x"] = n_tailed[kX];
  j["n_tailed_y"] = n_tailed[kY];
  j["tailed_threshold_x"] = tailed_threshold(set, kX);
  j["tailed_threshold_y"] = tailed_threshold(set, kY);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

std::optional<std::string> find_target_leak(const ExampleSet& set) {
  for (const auto& ex : set.users) {
    const Role role = set.split.role[ex.uid];
    if (role == Role::kTrain) continue;
    for (int d = 0; d < kNumDomains; ++d) {
      const int tgt = ex.target[d];
      if (tgt < 0) continue;
      for (int it : ex.seq[d]) {
        if (it == tgt) {
          return "target leak in real sequence: user " + set.user_ids[ex.uid] +
                 " domain " + domain_name(static_cast<Domain>(d));
        }
      }
      for (int it : ex.pseudo[d]) {
        if (it == tgt) {
          return "target leak in pseudo sequence: user " + set.user_ids[ex.uid] +
                 " domain " + domain_name(static_cast<Domain>(d));
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace imvae
