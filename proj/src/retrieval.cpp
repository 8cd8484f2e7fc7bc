#include "bridge/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bridge/hashing.hpp"

namespace bridge::retrieval {

MemoryBank::MemoryBank(std::vector<BankEntry> entries, Normalizer normalizer)
    : entries_(std::move(entries)), normalizer_(normalizer) {
  if (entries_.empty()) throw DataError("memory bank is empty");
  const Eigen::Index w = entries_.front().history.size();
  const Eigen::Index h = entries_.front().future.size();
  histories_.resize(static_cast<Eigen::Index>(entries_.size()), w);
  futures_.resize(static_cast<Eigen::Index>(entries_.size()), h);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const BankEntry& e = entries_[i];
    if (e.history.size() != w || e.future.size() != h) throw DataError("bank entries disagree on W or H");
    if (e.hour < 0 || e.hour >= kHoursPerDay) throw DataError("bank entry hour out of range");
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index k = 0; k < w; ++k) histories_(row, k) = normalizer_.forward(e.history(k));
    for (Eigen::Index k = 0; k < h; ++k) futures_(row, k) = normalizer_.forward(e.future(k));
    hour_index_[static_cast<std::size_t>(e.hour)].push_back(i);
  }
}

void MemoryBank::encode_keys(const RetrieverParams& params) {
  Matrix contexts(static_cast<Eigen::Index>(entries_.size()), entries_.front().context.size());
  std::vector<int> hours(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    contexts.row(static_cast<Eigen::Index>(i)) = entries_[i].context.transpose();
    hours[i] = entries_[i].hour;
  }
  keys_ = encode_rows(contexts, histories_, hours, params);
  for (int h = 0; h < kHoursPerDay; ++h) {
    const auto& cand = hour_index_[static_cast<std::size_t>(h)];
    Matrix& block = hour_keys_[static_cast<std::size_t>(h)];
    block.resize(static_cast<Eigen::Index>(cand.size()), keys_.cols());
    for (std::size_t c = 0; c < cand.size(); ++c) {
      block.row(static_cast<Eigen::Index>(c)) = keys_.row(static_cast<Eigen::Index>(cand[c]));
    }
  }
  encoder_version_ = retriever_fingerprint(params);
}

std::string MemoryBank::checksum() const {
  Fnv1a hash;
  hash.update(normalizer_.mean);
  hash.update(normalizer_.std);
  for (const BankEntry& e : entries_) {
    hash.update(e.region_id);
    hash.update(e.anchor);
    hash.update(e.hour);
    for (const Vector* v : {&e.context, &e.history, &e.future}) {
      hash.update(v->size());
      hash.update(v->data(), static_cast<std::size_t>(v->size()) * sizeof(double));
    }
  }
  return hash.hex();
}

MemoryBank build_bank(const CityDataset& city, const std::vector<int>& train_anchors,
                      const std::vector<int>& observable_regions, int window, int horizon,
                      const Normalizer& normalizer, const RetrieverParams& params) {
  std::vector<int> regions = observable_regions;
  std::sort(regions.begin(), regions.end());
  std::vector<BankEntry> entries;
  entries.reserve(train_anchors.size() * regions.size());
  for (int anchor : train_anchors) {
    if (anchor >= city.split.train_end) throw DataError("build_bank: anchor outside the train split");
    for (int r : regions) {
      BankEntry e;
      e.region_id = r;
      e.anchor = anchor;
      e.hour = city.hour_at(anchor);
      e.context = city.regions.at(static_cast<std::size_t>(r)).context;
      e.history = city.demand.col(r).segment(anchor - window + 1, window);
      e.future = city.demand.col(r).segment(anchor + 1, horizon);
      entries.push_back(std::move(e));
    }
  }
  MemoryBank bank(std::move(entries), normalizer);
  bank.encode_keys(params);
  return bank;
}

EncodeTrace encode_traced(const Vector& context, const Vector& history, int hour, const RetrieverParams& params) {
  if (hour < 0 || hour >= kHoursPerDay) throw std::out_of_range("encode_retrieval: hour out of range");
  if (context.size() != params.context_branch.cols()) throw ShapeError("encode_retrieval: context dimension mismatch");
  const Eigen::Index hd = params.hour_table.cols();
  if (history.size() + hd != params.temporal_branch.cols()) throw ShapeError("encode_retrieval: window mismatch");

  EncodeTrace t;
  t.hour = hour;
  t.context = context;
  t.temporal_input.resize(history.size() + hd);
  t.temporal_input << history, params.hour_table.row(hour).transpose();
  const Eigen::Index bd = params.context_branch.rows();
  t.branches.resize(2 * bd);
  t.branches << params.context_branch * context, params.temporal_branch * t.temporal_input;
  t.hidden_pre = params.fuse_weight1 * t.branches + params.fuse_bias1.row(0).transpose();
  t.hidden = numerics::relu(t.hidden_pre);
  t.output = params.fuse_weight2 * t.hidden + params.fuse_bias2.row(0).transpose();
  t.norm = t.output.norm();
  t.unit = numerics::l2_normalize(t.output);
  return t;
}

Vector encode_retrieval(const Vector& context, const Vector& history, int hour, const RetrieverParams& params) {
  return encode_traced(context, history, hour, params).unit;
}

Matrix encode_rows(const Matrix& contexts, const Matrix& histories, const std::vector<int>& hours,
                   const RetrieverParams& params) {
  const Eigen::Index n = contexts.rows();
  const Eigen::Index w = histories.cols();
  const Eigen::Index hd = params.hour_table.cols();
  Matrix temporal(n, w + hd);
  temporal.leftCols(w) = histories;
  for (Eigen::Index i = 0; i < n; ++i) {
    temporal.row(i).tail(hd) = params.hour_table.row(hours[static_cast<std::size_t>(i)]);
  }
  const Eigen::Index bd = params.context_branch.rows();
  Matrix branches(n, 2 * bd);
  branches.leftCols(bd) = contexts * params.context_branch.transpose();
  branches.rightCols(bd) = temporal * params.temporal_branch.transpose();
  Matrix hidden = branches * params.fuse_weight1.transpose();
  hidden.rowwise() += params.fuse_bias1.row(0);
  hidden = numerics::relu(hidden);
  Matrix out = hidden * params.fuse_weight2.transpose();
  out.rowwise() += params.fuse_bias2.row(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = numerics::l2_normalize(out.row(i).transpose()).transpose();
  }
  return out;
}

void encode_backward(const EncodeTrace& t, const Vector& d_unit, const RetrieverParams& params,
                     RetrieverParams& grad) {
  const Vector d_out = numerics::l2_normalize_backward(t.unit, d_unit, t.norm);
  grad.fuse_weight2 += d_out * t.hidden.transpose();
  grad.fuse_bias2.row(0) += d_out.transpose();
  const Vector d_hidden_pre = (params.fuse_weight2.transpose() * d_out).cwiseProduct(numerics::relu_mask(t.hidden_pre));
  grad.fuse_weight1 += d_hidden_pre * t.branches.transpose();
  grad.fuse_bias1.row(0) += d_hidden_pre.transpose();
  const Vector d_branches = params.fuse_weight1.transpose() * d_hidden_pre;
  const Eigen::Index bd = params.context_branch.rows();
  grad.context_branch += d_branches.head(bd) * t.context.transpose();
  const Vector d_ex = d_branches.tail(bd);
  grad.temporal_branch += d_ex * t.temporal_input.transpose();
  const Eigen::Index hd = params.hour_table.cols();
  const Vector d_input = params.temporal_branch.transpose() * d_ex;
  grad.hour_table.row(t.hour) += d_input.tail(hd).transpose();
}

double reference_dot(const double* a, const double* b, Eigen::Index n) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

namespace {

void check_query(const MemoryBank& bank, int k, Eigen::Index dim) {
  if (k < 1) throw std::invalid_argument("retrieve: K must be at least 1");
  if (!bank.has_keys()) throw std::logic_error("retrieve: bank keys have not been encoded");
  if (dim != bank.keys().cols()) throw ShapeError("retrieve: query dimension differs from the keys");
}

// `ranking` holds one score per hour candidate, in hour_candidates order. The
// fast scores only shortlist; everything within rounding distance of the K-th
// score is re-scored with reference_dot so the final order is exact.
std::vector<std::size_t> select_top(const double* ranking, const double* query, const MemoryBank& bank, int hour,
                                    int k, const std::optional<EntryKey>& exclude, Vector* scores) {
  const auto& candidates = bank.hour_candidates(hour);
  const Eigen::Index dim = bank.keys().cols();
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const std::size_t idx = candidates[c];
    if (exclude && exclude->matches(bank.entry(idx))) continue;
    scored.emplace_back(ranking[c], idx);
  }
  auto better = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
  if (take < scored.size()) {
    std::nth_element(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take - 1), scored.end(), better);
    double qnorm = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) qnorm += query[i] * query[i];
    const double slack = 1e-10 * std::max(1.0, std::sqrt(qnorm));
    const double cutoff = scored[take - 1].first - slack;
    scored.erase(std::remove_if(scored.begin(), scored.end(), [&](const auto& s) { return s.first < cutoff; }),
                 scored.end());
  }
  for (auto& s : scored) s.first = reference_dot(bank.keys().row(static_cast<Eigen::Index>(s.second)).data(), query, dim);
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
  std::vector<std::size_t> out(take);
  if (scores != nullptr) scores->resize(static_cast<Eigen::Index>(take));
  for (std::size_t i = 0; i < take; ++i) {
    out[i] = scored[i].second;
    if (scores != nullptr) (*scores)(static_cast<Eigen::Index>(i)) = scored[i].first;
  }
  return out;
}

RetrievalRow weigh(std::vector<std::size_t> indices, Vector scores, const MemoryBank& bank, double temperature) {
  RetrievalRow row;
  row.indices = std::move(indices);
  row.scores = std::move(scores);
  row.prior = Vector::Zero(bank.normalized_futures().cols());
  if (row.indices.empty()) {
    row.weights.resize(0);
    return row;
  }
  row.valid = true;
  row.weights = numerics::row_softmax(row.scores.transpose(), temperature).row(0).transpose();
  for (std::size_t i = 0; i < row.indices.size(); ++i) {
    row.prior += row.weights(static_cast<Eigen::Index>(i)) *
                 bank.normalized_futures().row(static_cast<Eigen::Index>(row.indices[i])).transpose();
  }
  return row;
}

}  // namespace

std::vector<std::size_t> top_k(const Vector& query, const MemoryBank& bank, int hour, int k,
                               const std::optional<EntryKey>& exclude, Vector* scores) {
  check_query(bank, k, query.size());
  const Vector ranking = bank.hour_keys(hour) * query;
  return select_top(ranking.data(), query.data(), bank, hour, k, exclude, scores);
}

RetrievalRow retrieve(const Vector& query, const MemoryBank& bank, int hour, int k, double temperature,
                      const std::optional<EntryKey>& exclude) {
  if (!(temperature > 0)) throw std::invalid_argument("retrieve: temperature must be positive");
  Vector scores;
  auto indices = top_k(query, bank, hour, k, exclude, &scores);
  return weigh(std::move(indices), std::move(scores), bank, temperature);
}

std::vector<RetrievalRow> retrieve_batch(const Matrix& queries, const MemoryBank& bank, int hour, int k,
                                         double temperature, const std::vector<std::optional<EntryKey>>& exclude) {
  if (!(temperature > 0)) throw std::invalid_argument("retrieve: temperature must be positive");
  check_query(bank, k, queries.cols());
  if (!exclude.empty() && exclude.size() != static_cast<std::size_t>(queries.rows())) {
    throw ShapeError("retrieve_batch: one exclusion slot per query expected");
  }
  const Matrix ranking = queries * bank.hour_keys(hour).transpose();  // n x m, row-major
  std::vector<RetrievalRow> rows;
  rows.reserve(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const auto ex = exclude.empty() ? std::nullopt : exclude[static_cast<std::size_t>(i)];
    Vector scores;
    auto indices = select_top(ranking.row(i).data(), queries.row(i).data(), bank, hour, k, ex, &scores);
    rows.push_back(weigh(std::move(indices), std::move(scores), bank, temperature));
  }
  return rows;
}

std::size_t future_nearest(const std::vector<std::size_t>& candidates, const Vector& true_future,
                           const MemoryBank& bank) {
  if (candidates.empty()) throw std::invalid_argument("future_nearest: no candidates");
  std::size_t best = candidates.front();
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t idx : candidates) {
    const double d = (bank.normalized_futures().row(static_cast<Eigen::Index>(idx)).transpose() - true_future).norm();
    if (d < best_dist || (d == best_dist && idx < best)) {
      best = idx;
      best_dist = d;
    }
  }
  return best;
}

RetrievalLoss retrieval_loss(const Matrix& queries, const Matrix& true_futures, int hour, const MemoryBank& bank,
                             int k, const std::vector<std::optional<EntryKey>>& exclude) {
  RetrievalLoss out;
  out.chosen.resize(static_cast<std::size_t>(queries.rows()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    const auto ex = exclude.empty() ? std::nullopt : exclude[static_cast<std::size_t>(i)];
    const Vector q = queries.row(i).transpose();
    const auto cand = top_k(q, bank, hour, k, ex);
    if (cand.empty()) continue;
    const std::size_t best = future_nearest(cand, true_futures.row(i).transpose(), bank);
    out.chosen[static_cast<std::size_t>(i)] = best;
    total += 1.0 - q.dot(bank.keys().row(static_cast<Eigen::Index>(best)).transpose());
    ++out.regions;
  }
  out.value = out.regions > 0 ? total / static_cast<double>(out.regions) : 0.0;
  return out;
}

}  // namespace bridge::retrieval
