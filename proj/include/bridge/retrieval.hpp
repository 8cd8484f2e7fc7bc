#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "bridge/datamodel.hpp"
#include "bridge/params.hpp"

namespace bridge::retrieval {

/// One stored region-time window. Values are raw demand.
struct BankEntry {
  int region_id = 0;
  int anchor = 0;
  int hour = 0;
  Vector context;
  Vector history;  // length W
  Vector future;   // length H
};

/// Identifies a window in the bank: (anchor time, region). With
/// `any_anchor` set it stands for every window of the region.
struct EntryKey {
  int anchor = 0;
  int region_id = 0;
  bool any_anchor = false;

  bool matches(const BankEntry& e) const {
    return e.region_id == region_id && (any_anchor || e.anchor == anchor);
  }
};

/// Ordered entries with normalized key embeddings and an hour partition.
/// Keys are empty until encode_keys() is called.
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(std::vector<BankEntry> entries, Normalizer normalizer);

  /// Re-encodes every key with the given retriever (e.g. once per epoch).
  void encode_keys(const RetrieverParams& params);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<BankEntry>& entries() const { return entries_; }
  const BankEntry& entry(std::size_t i) const { return entries_[i]; }
  const Matrix& keys() const { return keys_; }
  /// Keys of hour_candidates(h), one contiguous row block per hour.
  const Matrix& hour_keys(int hour) const { return hour_keys_.at(static_cast<std::size_t>(hour)); }
  bool has_keys() const { return keys_.rows() == static_cast<Eigen::Index>(entries_.size()) && !entries_.empty(); }
  const Matrix& normalized_histories() const { return histories_; }
  const Matrix& normalized_futures() const { return futures_; }
  const std::vector<std::size_t>& hour_candidates(int hour) const { return hour_index_.at(static_cast<std::size_t>(hour)); }
  const Normalizer& normalizer() const { return normalizer_; }

  /// Fingerprint of the retriever that produced the current keys.
  const std::string& encoder_version() const { return encoder_version_; }

  /// Content checksum over the entries and normalization constants.
  std::string checksum() const;

 private:
  std::vector<BankEntry> entries_;
  Normalizer normalizer_;
  Matrix histories_;
  Matrix futures_;
  Matrix keys_;
  std::array<Matrix, kHoursPerDay> hour_keys_;
  std::array<std::vector<std::size_t>, kHoursPerDay> hour_index_;
  std::string encoder_version_;
};

/// One entry per (train anchor, observable region), ordered by (anchor, region id).
/// Keys are encoded from the true (unmasked) histories.
MemoryBank build_bank(const CityDataset& city, const std::vector<int>& train_anchors,
                      const std::vector<int>& observable_regions, int window, int horizon,
                      const Normalizer& normalizer, const RetrieverParams& params);

/// Intermediates of encode_retrieval used by the backward sweep.
struct EncodeTrace {
  Vector context;
  Vector temporal_input;  // [x || e^h]
  Vector branches;        // [e^c || e^x]
  Vector hidden_pre;
  Vector hidden;
  Vector output;          // psi_r(...) before normalization
  double norm = 0.0;
  Vector unit;
  int hour = 0;
};

EncodeTrace encode_traced(const Vector& context, const Vector& history, int hour, const RetrieverParams& params);

/// Unit-norm joint context/dynamics embedding used for queries and keys.
Vector encode_retrieval(const Vector& context, const Vector& history, int hour, const RetrieverParams& params);

/// Batched encoder: one row per (context, history, hour) triple.
Matrix encode_rows(const Matrix& contexts, const Matrix& histories, const std::vector<int>& hours,
                   const RetrieverParams& params);

void encode_backward(const EncodeTrace& trace, const Vector& d_unit, const RetrieverParams& params,
                     RetrieverParams& grad);

struct RetrievalRow {
  std::vector<std::size_t> indices;  // bank entries, best score first
  Vector scores;
  Vector weights;                    // softmax(scores / T_r)
  Vector prior;                      // weighted mean of normalized futures, length H
  bool valid = false;                // false when no candidate passed the hour filter
};

/// Plain left-to-right inner product. Reported scores and weights use this
/// arithmetic so they can be reproduced exactly by a linear scan.
double reference_dot(const double* a, const double* b, Eigen::Index n);

/// Top-K same-hour entries by inner product, ties to the smaller entry index.
std::vector<std::size_t> top_k(const Vector& query, const MemoryBank& bank, int hour, int k,
                               const std::optional<EntryKey>& exclude, Vector* scores = nullptr);

RetrievalRow retrieve(const Vector& query, const MemoryBank& bank, int hour, int k, double temperature,
                      const std::optional<EntryKey>& exclude = std::nullopt);

/// Among `candidates`, the entry whose normalized future is L2-closest to
/// `true_future` (normalized); ties to the smaller entry index.
/// retrieve() for a batch of queries (rows) sharing one hour; candidates are
/// ranked with a single matrix product.
std::vector<RetrievalRow> retrieve_batch(const Matrix& queries, const MemoryBank& bank, int hour, int k,
                                         double temperature,
                                         const std::vector<std::optional<EntryKey>>& exclude = {});

std::size_t future_nearest(const std::vector<std::size_t>& candidates, const Vector& true_future,
                           const MemoryBank& bank);

struct RetrievalLoss {
  double value = 0.0;
  std::size_t regions = 0;                      // regions with a nonempty candidate set
  std::vector<std::optional<std::size_t>> chosen;  // future-nearest entry per region
};

/// mean_i (1 - q_i . k*_i) over regions with candidates, using the bank's cached keys.
/// Rows of `queries` are unit embeddings, rows of `true_futures` are normalized futures.
RetrievalLoss retrieval_loss(const Matrix& queries, const Matrix& true_futures, int hour, const MemoryBank& bank,
                             int k, const std::vector<std::optional<EntryKey>>& exclude = {});

}  // namespace bridge::retrieval
