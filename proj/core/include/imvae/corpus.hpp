// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "imvae/common.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace imvae {

// Two interaction domains. Used as an array index throughout.
enum Domain : int { kX = 0, kY = 1 };
constexpr int kNumDomains = 2;
inline constexpr Domain other(Domain d) { return d == kX ? kY : kX; }
inline const char* domain_name(Domain d) { return d == kX ? "x" : "y"; }

// ---------------------------------------------------------------------------
// Raw ingestion.
// ---------------------------------------------------------------------------

struct RawRecord {
  std::string user;
  std::string item;
  double rating = 0.0;  // parsed but unused downstream (implicit feedback)
  std::int64_t timestamp = 0;
  std::int64_t line = 0;  // original file order, tie-break for equal timestamps
};

struct IngestStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_records = 0;   // after dedup
  std::size_t n_malformed = 0;
  std::size_t n_duplicates = 0;
  double density = 0.0;        // n_records / (n_users * n_items)
  double mean_seq_len = 0.0;   // n_records / n_users
};

struct InteractionLog {
  Domain domain = kX;
  std::vector<RawRecord> records;  // sorted by (user, timestamp, file order)
  IngestStats stats;
};

// Reads a `user,item,rating,timestamp` CSV. Malformed lines are skipped and
// counted; more than 1% malformed (or an unreadable/empty file) is fatal.
// Records are sorted by (user, timestamp, file order). Exact duplicate
// (user,item,timestamp) rows and repeat (user,item) pairs keep the first
// occurrence in that order.
InteractionLog ingest_ratings(const std::string& path, Domain domain);

// Same parser over an in-memory buffer (used by tests and the synthesizer).
InteractionLog ingest_ratings_text(const std::string& text, Domain domain,
                                   const std::string& origin = "<memory>");

// Record-level downsampling without replacement to `density` (fraction kept,
// in (0,1]); keeps exactly round(density * n) records, order preserved.
InteractionLog downsample_records(const InteractionLog& log, double density,
                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Indexed corpus: union user vocabulary, per-domain item vocabularies
// (index 0 reserved for PAD), chronological index sequences.
// ---------------------------------------------------------------------------

struct Corpus {
  std::vector<std::string> user_ids;                       // sorted; index = uid
  std::array<std::vector<std::string>, kNumDomains> item_ids;  // [d][iid-1]
  std::array<std::vector<std::vector<int>>, kNumDomains> seqs; // [d][uid] -> items

  int n_users() const { return static_cast<int>(user_ids.size()); }
  int n_items(Domain d) const { return static_cast<int>(item_ids[d].size()); }
  bool present(Domain d, int uid) const { return !seqs[d][uid].empty(); }
  std::uint64_t fingerprint() const;
};

Corpus build_corpus(const InteractionLog& log_x, const InteractionLog& log_y);

// ---------------------------------------------------------------------------
// User split + perturbations.
// ---------------------------------------------------------------------------

enum class Role : std::uint8_t { kTrain = 0, kValid = 1, kTest = 2 };

struct SplitRatios {
  double train = 0.8, valid = 0.1, test = 0.1;
};

constexpr std::uint8_t kNoDomain = 0xFF;

struct UserSplit {
  std::vector<Role> role;                // per uid
  std::vector<std::uint8_t> overlapping; // per uid, 0/1
  // Overlap-ratio simulation: domain whose history is dropped from this
  // (training) user, or kNoDomain.
  std::vector<std::uint8_t> dropped_domain;
  // Cold-start simulation: domain removed from this (valid/test) user except
  // the final interaction, or kNoDomain.
  std::vector<std::uint8_t> cold_domain;
  std::uint64_t seed = 0;
  double overlap_ratio = 1.0;   // k_o
  double cold_fraction = 0.0;   // k_cs

  bool is_cold(int uid) const { return cold_domain[uid] != kNoDomain; }
};

// Stratified user-level split: within each stratum {X-only, Y-only,
// overlapping} the ratios hold within +-1 user (largest-remainder rounding).
// overlap_ratio k_o additionally drops one uniformly chosen domain's history
// from exactly round((1-k_o) * n_overlap_train) overlapping training users.
UserSplit split_users(const Corpus& corpus, const SplitRatios& ratios,
                      double overlap_ratio, std::uint64_t seed);

// Marks round(k_cs * n) of the overlapping valid+test users as cold in one
// uniformly chosen domain: that domain's sequence is removed except the last
// interaction, which becomes the evaluation target.
void simulate_cold_start(const Corpus& corpus, UserSplit& split,
                         double cold_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Fixed-shape training/evaluation examples.
// ---------------------------------------------------------------------------

constexpr int kPad = 0;

// Group-tag bits.
constexpr std::uint8_t kTagTailedX = 1 << 0;
constexpr std::uint8_t kTagTailedY = 1 << 1;
constexpr std::uint8_t kTagCold = 1 << 2;
constexpr std::uint8_t kTagOverlap = 1 << 3;

// Pseudo-sequence item provenance.
enum class PseudoSource : std::uint8_t { kPad = 0, kOriginal = 1, kRecalled = 2 };

struct UserExample {
  int uid = -1;
  // Real input sequences, left-padded with kPad to length T.
  std::array<std::vector<int>, kNumDomains> seq;
  std::array<int, kNumDomains> true_len{0, 0};
  // Dense pseudo-sequences of length T' (filled by the recall stage;
  // empty vectors until then).
  std::array<std::vector<int>, kNumDomains> pseudo;
  std::array<std::vector<std::uint8_t>, kNumDomains> pseudo_src;
  // Held-out next-item target, or -1 when the user has none in the domain.
  std::array<int, kNumDomains> target{-1, -1};
  // Full interacted item set per domain (sorted, includes targets); negative
  // sampling and recall exclusion draw against this.
  std::array<std::vector<int>, kNumDomains> interacted;
  std::uint8_t tags = 0;

  bool has_target(Domain d) const { return target[d] >= 0; }
  bool tailed(Domain d) const {
    return tags & (d == kX ? kTagTailedX : kTagTailedY);
  }
};

struct ExampleSet {
  int T = 0;        // real-sequence window
  int Tp = 0;       // pseudo-sequence length (0 until recall ran)
  std::array<int, kNumDomains> n_items{0, 0};
  std::vector<std::string> user_ids;
  std::array<std::vector<std::string>, kNumDomains> item_ids;
  std::vector<UserExample> users;
  UserSplit split;
  std::uint64_t corpus_hash = 0;

  int n_users() const { return static_cast<int>(users.size()); }
  const UserExample& at(int uid) const { return users[uid]; }
};

// Materializes per-user examples under the split:
//  - train users: last interaction is the target, preceding min(len-1, T)
//    items form the input; overlap-dropped domains are erased entirely.
//  - valid/test users: same target/input rule; cold domains keep only the
//    target (empty input).
// Tags are filled by tag_user_groups.
ExampleSet build_examples(const Corpus& corpus, const UserSplit& split, int T);

// Tailed threshold per domain: mean true length of the bottom-80%-by-length
// users (among users with at least one real input item); users strictly below
// the threshold are tagged. Also sets cold/overlap tags from the split.
void tag_user_groups(ExampleSet& set);

// Threshold value used by tag_user_groups (exposed for diagnostics/tests).
double tailed_threshold(const ExampleSet& set, Domain d);

// ---------------------------------------------------------------------------
// Store.
// ---------------------------------------------------------------------------

void save_examples(const ExampleSet& set, const std::string& path);
ExampleSet load_examples(const std::string& path);

// Human-readable split manifest (JSON) next to the binary store.
void write_split_manifest(const ExampleSet& set, const std::string& path);

// Leak scan: returns a description of the first violation found, or nullopt.
// Checks that no valid/test target appears in that user's real input slice or
// pseudo-sequence in any domain.
std::optional<std::string> find_target_leak(const ExampleSet& set);

}  // namespace imvae
