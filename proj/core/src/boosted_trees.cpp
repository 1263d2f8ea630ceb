#include "geovid/boosted_trees.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "geovid/error.hpp"
#include "geovid/features.hpp"
#include "geovid/parallel.hpp"

namespace geovid {

namespace fs = std::filesystem;

namespace {

constexpr double kLambda = 1e-12;

double logistic(double s) { return 1.0 / (1.0 + std::exp(-s)); }

double softplus(double z) {
  // log(1 + exp(z)) without overflow.
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

double DecisionTree::score(std::span<const float> x) const {
  if (nodes_.empty()) return 0.0;
  std::int32_t i = 0;
  while (nodes_[i].feature >= 0) {
    i = x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right;
  }
  return nodes_[i].value;
}

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].feature < 0) continue;
    d[nodes_[i].left] = d[i] + 1;
    d[nodes_[i].right] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

double BoostedEnsemble::score(std::span<const float> x) const {
  double s = 0;
  for (const auto& t : trees) s += t.score(x);
  return s;
}

double BoostedEnsemble::posterior(std::span<const float> x) const {
  return std::clamp(logistic(score(x)), 1e-15, 1.0 - 1e-15);
}

PreparedData::PreparedData(FeatureMatrix x) : rows_(x.rows()), dims_(x.dims) {
  columns_.resize(rows_ * dims_);
  for (std::size_t i = 0; i < rows_; ++i) {
    const auto row = x.row(i);
    for (int f = 0; f < dims_; ++f) {
      const float v = row[f];
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFiniteFeature,
                    "row " + std::to_string(i) + " feature " + std::to_string(f));
      }
      columns_[std::size_t(f) * rows_ + i] = v;
    }
  }
  for (int f = 0; f < dims_; ++f) {
    const float* col = columns_.data() + std::size_t(f) * rows_;
    const auto [lo, hi] = std::minmax_element(col, col + rows_);
    if (rows_ > 0 && *lo != *hi) active_.push_back(f);
  }
  const std::size_t na = active_.size();
  codes_.resize(na * rows_);
  bin_count_.assign(na, 0);
  bin_min_.assign(na * kMaxBins, 0.f);
  bin_max_.assign(na * kMaxBins, 0.f);
  parallel_for(na, [&](std::size_t a) {
    const float* col = columns_.data() + std::size_t(active_[a]) * rows_;
    std::vector<float> sorted(col, col + rows_);
    std::sort(sorted.begin(), sorted.end());
    std::vector<float> uppers;
    std::unique_copy(sorted.begin(), sorted.end(), std::back_inserter(uppers));
    if (uppers.size() > static_cast<std::size_t>(kMaxBins)) {
      // Quantile upper bounds; the last one is the maximum.
      uppers.clear();
      for (int k = 0; k < kMaxBins; ++k) {
        const std::size_t pos = std::min(rows_ - 1, (std::size_t(k) + 1) * rows_ / kMaxBins);
        const float u = k + 1 == kMaxBins ? sorted.back() : sorted[pos];
        if (uppers.empty() || u > uppers.back()) uppers.push_back(u);
      }
    }
    bin_count_[a] = static_cast<int>(uppers.size());
    float* lo = bin_min_.data() + a * kMaxBins;
    float* hi = bin_max_.data() + a * kMaxBins;
    std::fill(lo, lo + kMaxBins, std::numeric_limits<float>::infinity());
    std::fill(hi, hi + kMaxBins, -std::numeric_limits<float>::infinity());
    std::uint8_t* code = codes_.data() + a * rows_;
    for (std::size_t i = 0; i < rows_; ++i) {
      const auto b = static_cast<int>(std::lower_bound(uppers.begin(), uppers.end(), col[i]) - uppers.begin());
      code[i] = static_cast<std::uint8_t>(b);
      lo[b] = std::min(lo[b], col[i]);
      hi[b] = std::max(hi[b], col[i]);
    }
  });
}

double logistic_loss(std::span<const double> scores, std::span<const std::int8_t> labels,
                     std::span<const double> weights) {
  double total = 0, wsum = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    total += w * softplus(-labels[i] * scores[i]);
    wsum += w;
  }
  return wsum > 0 ? total / wsum : 0.0;
}

namespace {

struct NodeStats {
  double G = 0, H = 0;
};

struct Split {
  double gain = 0;
  int feature = -1;
  double threshold = 0;
  int active = -1;  // active-feature index and the two bins around the cut
  int lo_bin = -1;
  int hi_bin = -1;
};

double node_score(double G, double H) { return G * G / (H + kLambda); }

struct Bin {
  double G = 0, H = 0;
  std::uint32_t n = 0;
};

// Histograms of one node: active features x kMaxBins.
using NodeHist = std::vector<Bin>;

void build_hist(const PreparedData& data, std::span<const std::uint32_t> rows, const std::vector<double>& g,
                const std::vector<double>& h, NodeHist& hist) {
  const std::size_t na = data.active_features().size();
  hist.assign(na * PreparedData::kMaxBins, Bin{});
  for (std::size_t a = 0; a < na; ++a) {
    Bin* hb = hist.data() + a * PreparedData::kMaxBins;
    const auto codes = data.codes(static_cast<int>(a));
    for (std::uint32_t i : rows) {
      Bin& b = hb[codes[i]];
      b.G += g[i];
      b.H += h[i];
      b.n++;
    }
  }
}

void subtract_hist(const NodeHist& parent, const NodeHist& child, NodeHist& out) {
  out.resize(parent.size());
  for (std::size_t k = 0; k < parent.size(); ++k) {
    out[k] = {parent[k].G - child[k].G, parent[k].H - child[k].H, parent[k].n - child[k].n};
  }
}

Split best_split(const PreparedData& data, const NodeHist& hist, const NodeStats& tot) {
  Split best;
  const auto& active = data.active_features();
  for (std::size_t a = 0; a < active.size(); ++a) {
    const Bin* hb = hist.data() + a * PreparedData::kMaxBins;
    const int nb = data.bin_count(static_cast<int>(a));
    double G = 0, H = 0;
    int prev = -1;
    for (int b = 0; b < nb; ++b) {
      if (hb[b].n == 0) continue;
      if (prev >= 0) {
        const double gain = node_score(G, H) + node_score(tot.G - G, tot.H - H) - node_score(tot.G, tot.H);
        // Strict improvement keeps the smallest feature index and threshold on ties.
        if (gain > best.gain) {
          const int ai = static_cast<int>(a);
          best = {gain, active[a],
                  0.5 * (static_cast<double>(data.bin_max(ai, prev)) + static_cast<double>(data.bin_min(ai, b))), ai,
                  prev, b};
        }
      }
      G += hb[b].G;
      H += hb[b].H;
      prev = b;
    }
  }
  return best;
}

// Quantile bins can straddle the best cut of a dense feature. Re-scan the
// exact values of the two bins around the chosen boundary.
Split refine_split(const PreparedData& data, const NodeHist& hist, const NodeStats& tot,
                   std::span<const std::uint32_t> rows, const std::vector<double>& g, const std::vector<double>& h,
                   Split s) {
  if (s.feature < 0) return s;
  auto exact = [&](int b) { return data.bin_min(s.active, b) == data.bin_max(s.active, b); };
  if (exact(s.lo_bin) && exact(s.hi_bin)) return s;
  const Bin* hb = hist.data() + std::size_t(s.active) * PreparedData::kMaxBins;
  double G = 0, H = 0;
  for (int b = 0; b < s.lo_bin; ++b) {
    G += hb[b].G;
    H += hb[b].H;
  }
  struct Item {
    float x;
    double g, h;
  };
  std::vector<Item> items;
  const auto codes = data.codes(s.active);
  for (std::uint32_t i : rows) {
    const int c = codes[i];
    if (c == s.lo_bin || c == s.hi_bin) items.push_back({data.at(i, s.feature), g[i], h[i]});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.x < b.x; });
  for (std::size_t k = 0; k + 1 < items.size(); ++k) {
    G += items[k].g;
    H += items[k].h;
    if (items[k].x == items[k + 1].x) continue;
    const double gain = node_score(G, H) + node_score(tot.G - G, tot.H - H) - node_score(tot.G, tot.H);
    if (gain > s.gain) {
      s.gain = gain;
      s.threshold = 0.5 * (static_cast<double>(items[k].x) + static_cast<double>(items[k + 1].x));
    }
  }
  return s;
}

// Grows one depth-limited regression tree on Newton statistics (g, h).
// Returns the tree and the leaf node reached by every training row.
std::pair<std::vector<TreeNode>, std::vector<std::int32_t>> grow_tree(
    const PreparedData& data, const std::vector<double>& g, const std::vector<double>& h,
    const BoostParams& params) {
  const std::size_t n = data.rows();
  struct Open {
    std::int32_t id;
    std::vector<std::uint32_t> rows;
    NodeStats stats;
    NodeHist hist;
  };
  std::vector<TreeNode> nodes(1);
  std::vector<NodeStats> stats(1);
  std::vector<std::int32_t> node_of(n, 0);

  Open root{0, std::vector<std::uint32_t>(n), {}, {}};
  std::iota(root.rows.begin(), root.rows.end(), 0u);
  for (std::size_t i = 0; i < n; ++i) {
    root.stats.G += g[i];
    root.stats.H += h[i];
  }
  stats[0] = root.stats;
  build_hist(data, root.rows, g, h, root.hist);

  std::vector<Open> frontier;
  frontier.push_back(std::move(root));
  for (int depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
    std::vector<Open> next;
    for (Open& node : frontier) {
      const Split s = refine_split(data, node.hist, node.stats, node.rows, g, h,
                                   best_split(data, node.hist, node.stats));
      if (s.feature < 0 || s.gain <= 1e-12) continue;
      const auto left = static_cast<std::int32_t>(nodes.size());
      nodes[node.id].feature = s.feature;
      nodes[node.id].threshold = s.threshold;
      nodes[node.id].left = left;
      nodes[node.id].right = left + 1;
      nodes.emplace_back();
      nodes.emplace_back();
      Open l{left, {}, {}, {}}, r{left + 1, {}, {}, {}};
      for (std::uint32_t i : node.rows) {
        Open& c = data.at(i, s.feature) <= s.threshold ? l : r;
        c.rows.push_back(i);
        c.stats.G += g[i];
        c.stats.H += h[i];
        node_of[i] = c.id;
      }
      stats.push_back(l.stats);
      stats.push_back(r.stats);
      if (depth + 1 < params.max_depth) {
        // Build the smaller child directly and derive its sibling by subtraction.
        Open& small = l.rows.size() <= r.rows.size() ? l : r;
        Open& large = l.rows.size() <= r.rows.size() ? r : l;
        build_hist(data, small.rows, g, h, small.hist);
        subtract_hist(node.hist, small.hist, large.hist);
      }
      next.push_back(std::move(l));
      next.push_back(std::move(r));
    }
    frontier = std::move(next);
  }

  for (std::size_t id = 0; id < nodes.size(); ++id) {
    if (nodes[id].feature >= 0) continue;
    const double step = -stats[id].G / (stats[id].H + kLambda);
    nodes[id].value = std::clamp(step, -params.max_step, params.max_step) * params.shrinkage;
  }
  return {std::move(nodes), std::move(node_of)};
}

}  // namespace

TrainResult train_boosted(const PreparedData& data, std::span<const std::int8_t> labels,
                          std::span<const double> weights, const BoostParams& params) {
  const std::size_t n = data.rows();
  if (labels.size() != n || (!weights.empty() && weights.size() != n)) {
    throw Error(ErrorCode::DimensionMismatch, "labels/weights do not match feature rows");
  }
  bool pos = false, neg = false;
  for (auto y : labels) {
    pos |= y > 0;
    neg |= y < 0;
  }
  if (!pos || !neg) throw Error(ErrorCode::DegenerateData, "training data has a single class");

  TrainResult result;
  result.ensemble.learning_rate = params.shrinkage;
  std::vector<double> F(n, 0.0), trial(n), g(n), h(n);
  double loss = logistic_loss(F, labels, weights);
  result.loss_history.push_back(loss);

  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double w = weights.empty() ? 1.0 : weights[i];
      const double p = logistic(F[i]);
      g[i] = w * (p - (labels[i] > 0 ? 1.0 : 0.0));
      h[i] = w * p * (1.0 - p);
    }
    auto [nodes, leaf_of] = grow_tree(data, g, h, params);

    double alpha = 1.0;
    bool accepted = false;
    double new_loss = loss;
    for (int halving = 0; halving <= 20; ++halving, alpha *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = F[i] + alpha * nodes[leaf_of[i]].value;
      new_loss = logistic_loss(trial, labels, weights);
      if (new_loss <= loss) {
        accepted = true;
        break;
      }
    }
    if (!accepted || new_loss == loss) break;  // no descent left
    for (auto& nd : nodes) nd.value *= alpha;
    F.swap(trial);
    loss = new_loss;
    result.loss_history.push_back(loss);
    result.ensemble.trees.emplace_back(std::move(nodes));
  }
  return result;
}

TrainResult train_boosted(FeatureMatrix x, std::span<const std::int8_t> labels,
                          std::span<const double> weights, const BoostParams& params) {
  return train_boosted(PreparedData(x), labels, weights, params);
}

ClassifierBundle empty_bundle() {
  ClassifierBundle b;
  b.feature_layout_version = layout::kFeatureLayoutVersion;
  b.feature_dims = layout::kFeatureDims;
  for (int k = 0; k < 3; ++k) {
    b.main[k].class_of_interest = static_cast<std::int32_t>(kMainClasses[k]);
    b.subvertical[k].class_of_interest = static_cast<std::int32_t>(kSubVerticalClasses[k]);
  }
  b.homogeneity.class_of_interest = -1;
  return b;
}

void LabeledSet::append(std::span<const float> row, GeoLabel label, double weight) {
  x.insert(x.end(), row.begin(), row.end());
  labels.push_back(label);
  if (!weights.empty() || weight != 1.0) {
    if (weights.empty()) weights.assign(labels.size() - 1, 1.0);
    weights.push_back(weight);
  }
}

FeatureMatrix LabeledSet::matrix() const { return {x, layout::kFeatureDims}; }

namespace {

// Trains one one-vs-rest member; a class without positives or negatives keeps
// an empty ensemble (posterior 0.5).
void fit_member(BoostedEnsemble& target, const PreparedData& data, std::span<const std::int8_t> y,
                std::span<const double> w, const BoostParams& params, const char* role) {
  const std::int32_t coi = target.class_of_interest;
  try {
    target = train_boosted(data, y, w, params).ensemble;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateData) throw;
    spdlog::warn("{}: {}; leaving ensemble empty", role, e.what());
    target = BoostedEnsemble{};
    target.learning_rate = params.shrinkage;
  }
  target.class_of_interest = coi;
}

struct Subset {
  std::vector<float> x;
  std::vector<GeoLabel> labels;
  std::vector<double> weights;
};

template <class Pred>
Subset select(const LabeledSet& data, Pred keep) {
  Subset s;
  const int d = layout::kFeatureDims;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!keep(data.labels[i])) continue;
    s.x.insert(s.x.end(), data.x.begin() + i * d, data.x.begin() + (i + 1) * d);
    s.labels.push_back(data.labels[i]);
    s.weights.push_back(data.weights.empty() ? 1.0 : data.weights[i]);
  }
  return s;
}

}  // namespace

ClassifierBundle train_bundle(const LabeledSet& data, const BoostParams& params) {
  ClassifierBundle bundle = empty_bundle();
  bundle.params = params;
  const int d = layout::kFeatureDims;
  if (data.x.size() != data.size() * d) {
    throw Error(ErrorCode::DimensionMismatch, "training rows must have " + std::to_string(d) + " features");
  }

  struct Job {
    BoostedEnsemble* target;
    const PreparedData* data;
    std::vector<std::int8_t> y;
    const std::vector<double>* w;
    const char* role;
  };
  std::vector<Job> jobs;

  const Subset main_rows = select(data, [](GeoLabel l) { return l != GeoLabel::Mix; });
  std::optional<PreparedData> main_data;
  if (!main_rows.labels.empty()) {
    main_data.emplace(FeatureMatrix{main_rows.x, d});
    for (int k = 0; k < 3; ++k) {
      std::vector<std::int8_t> y(main_rows.labels.size());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = main_label(main_rows.labels[i]) == kMainClasses[k] ? 1 : -1;
      jobs.push_back({&bundle.main[k], &*main_data, std::move(y), &main_rows.weights, "main"});
    }
  }
  const Subset sub_rows = select(data, [](GeoLabel l) { return is_subvertical(l); });
  std::optional<PreparedData> sub_data;
  if (!sub_rows.labels.empty()) {
    sub_data.emplace(FeatureMatrix{sub_rows.x, d});
    for (int k = 0; k < 3; ++k) {
      std::vector<std::int8_t> y(sub_rows.labels.size());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = sub_rows.labels[i] == kSubVerticalClasses[k] ? 1 : -1;
      jobs.push_back({&bundle.subvertical[k], &*sub_data, std::move(y), &sub_rows.weights, "subvertical"});
    }
  }
  std::optional<PreparedData> all_data;
  const std::vector<double> all_weights = data.weights.empty() ? std::vector<double>(data.size(), 1.0) : data.weights;
  if (data.size() > 0) {
    std::vector<std::int8_t> y(data.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = data.labels[i] != GeoLabel::Mix ? 1 : -1;
    const bool both = std::find(y.begin(), y.end(), 1) != y.end() && std::find(y.begin(), y.end(), -1) != y.end();
    if (both) {
      all_data.emplace(data.matrix());
      jobs.push_back({&bundle.homogeneity, &*all_data, std::move(y), &all_weights, "homogeneity"});
    } else {
      // Single class: constant add-one smoothed log-odds, log((n+1)/1).
      const double logit = std::log(static_cast<double>(y.size()) + 1.0) * y.front();
      TreeNode leaf;
      leaf.value = logit;
      bundle.homogeneity.trees.assign(1, DecisionTree({leaf}));
      spdlog::warn("homogeneity: every training row has the same homogeneity label; using a constant prior");
    }
  }
  parallel_for(jobs.size(), [&](std::size_t j) {
    fit_member(*jobs[j].target, *jobs[j].data, jobs[j].y, *jobs[j].w, params, jobs[j].role);
  });
  return bundle;
}

Posterior predict_posterior(const ClassifierBundle& bundle, std::span<const float> x) {
  if (static_cast<int>(x.size()) != layout::kFeatureDims) {
    throw Error(ErrorCode::DimensionMismatch,
                "expected " + std::to_string(layout::kFeatureDims) + " features, got " + std::to_string(x.size()));
  }
  Posterior p;
  auto normalize = [&](const std::array<BoostedEnsemble, 3>& members, std::array<double, 3>& out) {
    double sum = 0;
    for (int k = 0; k < 3; ++k) sum += out[k] = members[k].posterior(x);
    for (auto& v : out) v /= sum;
  };
  normalize(bundle.main, p.main);
  normalize(bundle.subvertical, p.subvertical);
  p.homogeneity = bundle.homogeneity.posterior(x);
  return p;
}

std::vector<int> assign_folds(std::size_t videos, int k, std::uint64_t seed) {
  std::vector<std::size_t> perm(videos);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  // Explicit Fisher-Yates: std::shuffle's sequence is implementation-defined.
  for (std::size_t i = videos; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng() % i]);
  }
  std::vector<int> fold(videos);
  for (std::size_t pos = 0; pos < videos; ++pos) fold[perm[pos]] = static_cast<int>(pos % k);
  return fold;
}

CrossValidationReport cross_validate_bundle(const std::vector<VideoExamples>& dataset, int k,
                                            const BoostParams& params, std::uint64_t seed) {
  if (k < 2 || dataset.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewVideos, std::to_string(dataset.size()) + " videos for " +
                                             std::to_string(k) + " folds");
  }
  const auto fold = assign_folds(dataset.size(), k, seed);
  const int d = layout::kFeatureDims;
  CrossValidationReport report;
  for (int f = 0; f < k; ++f) {
    LabeledSet train;
    FoldMetrics m;
    for (std::size_t v = 0; v < dataset.size(); ++v) {
      if (fold[v] == f) {
        m.test_videos.push_back(dataset[v].video_id);
        continue;
      }
      const auto& ex = dataset[v].examples;
      for (std::size_t i = 0; i < ex.size(); ++i) {
        train.append(std::span<const float>(ex.x).subspan(i * d, d), ex.labels[i],
                     ex.weights.empty() ? 1.0 : ex.weights[i]);
      }
    }
    const ClassifierBundle bundle = train_bundle(train, params);
    double main_ok = 0, main_n = 0, sub_ok = 0, sub_n = 0;
    for (std::size_t v = 0; v < dataset.size(); ++v) {
      if (fold[v] != f) continue;
      const auto& ex = dataset[v].examples;
      for (std::size_t i = 0; i < ex.size(); ++i) {
        const GeoLabel l = ex.labels[i];
        if (l == GeoLabel::Mix) continue;
        const Posterior p = predict_posterior(bundle, std::span<const float>(ex.x).subspan(i * d, d));
        const auto main_pred = std::max_element(p.main.begin(), p.main.end()) - p.main.begin();
        main_ok += main_pred == main_index(main_label(l));
        main_n += 1;
        if (is_subvertical(l)) {
          const auto sub_pred = std::max_element(p.subvertical.begin(), p.subvertical.end()) - p.subvertical.begin();
          sub_ok += sub_pred == subvertical_index(l);
          sub_n += 1;
        }
      }
    }
    m.main_accuracy = main_n > 0 ? main_ok / main_n : 0;
    m.subvertical_accuracy = sub_n > 0 ? sub_ok / sub_n : 0;
    report.mean_main += m.main_accuracy / k;
    report.mean_subvertical += m.subvertical_accuracy / k;
    report.folds.push_back(std::move(m));
  }
  return report;
}

namespace {

constexpr char kMagic[5] = {'G', 'V', 'B', 'T', '1'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw Error(ErrorCode::FormatError, "truncated model file");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::FormatError, "truncated model file");
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_ensemble(Writer& w, const BoostedEnsemble& e) {
  w.put<std::int32_t>(e.class_of_interest);
  w.put<double>(e.learning_rate);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(e.trees.size()));
  for (const auto& t : e.trees) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.nodes().size()));
    for (const auto& n : t.nodes()) {
      w.put<std::int32_t>(n.feature);
      w.put<double>(n.threshold);
      w.put<std::int32_t>(n.left);
      w.put<std::int32_t>(n.right);
      w.put<double>(n.value);
    }
  }
}

BoostedEnsemble read_ensemble(Reader& r) {
  BoostedEnsemble e;
  e.class_of_interest = r.get<std::int32_t>();
  e.learning_rate = r.get<double>();
  const auto trees = r.get<std::uint32_t>();
  for (std::uint32_t t = 0; t < trees; ++t) {
    const auto count = r.get<std::uint32_t>();
    std::vector<TreeNode> nodes(count);
    for (auto& n : nodes) {
      n.feature = r.get<std::int32_t>();
      n.threshold = r.get<double>();
      n.left = r.get<std::int32_t>();
      n.right = r.get<std::int32_t>();
      n.value = r.get<double>();
      if (n.feature >= 0 && (n.left < 0 || n.right < 0 || n.left >= std::int32_t(count) ||
                             n.right >= std::int32_t(count))) {
        throw Error(ErrorCode::FormatError, "corrupt tree node");
      }
    }
    e.trees.emplace_back(std::move(nodes));
  }
  return e;
}

}  // namespace

std::vector<std::uint8_t> serialize_bundle(const ClassifierBundle& bundle) {
  Writer w;
  for (char c : kMagic) w.put<char>(c);
  w.put<std::uint32_t>(7);
  for (const auto& e : bundle.main) write_ensemble(w, e);
  for (const auto& e : bundle.subvertical) write_ensemble(w, e);
  write_ensemble(w, bundle.homogeneity);
  const nlohmann::json meta{
      {"feature_layout_version", bundle.feature_layout_version},
      {"feature_dims", bundle.feature_dims},
      {"roles", {"main:sky", "main:ground", "main:vertical", "sub:solid", "sub:porous", "sub:object",
                 "homogeneity"}},
      {"params",
       {{"rounds", bundle.params.rounds},
        {"max_depth", bundle.params.max_depth},
        {"shrinkage", bundle.params.shrinkage},
        {"max_step", bundle.params.max_step}}}};
  const std::string text = meta.dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.bytes.insert(w.bytes.end(), text.begin(), text.end());
  return std::move(w.bytes);
}

ClassifierBundle deserialize_bundle(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(5);
  if (std::memcmp(magic.data(), kMagic, 5) != 0) throw Error(ErrorCode::FormatError, "not a GVBT1 model");
  if (r.get<std::uint32_t>() != 7) throw Error(ErrorCode::FormatError, "expected 7 ensembles");
  ClassifierBundle b;
  for (auto& e : b.main) e = read_ensemble(r);
  for (auto& e : b.subvertical) e = read_ensemble(r);
  b.homogeneity = read_ensemble(r);
  const auto len = r.get<std::uint32_t>();
  const auto text = r.take(len);
  const auto meta = nlohmann::json::parse(text.begin(), text.end());
  b.feature_layout_version = meta.at("feature_layout_version").get<int>();
  b.feature_dims = meta.at("feature_dims").get<int>();
  const auto& p = meta.at("params");
  b.params.rounds = p.at("rounds").get<int>();
  b.params.max_depth = p.at("max_depth").get<int>();
  b.params.shrinkage = p.at("shrinkage").get<double>();
  b.params.max_step = p.at("max_step").get<double>();
  if (b.feature_layout_version != layout::kFeatureLayoutVersion || b.feature_dims != layout::kFeatureDims) {
    throw Error(ErrorCode::ModelMismatch,
                "model feature layout v" + std::to_string(b.feature_layout_version) + "/" +
                    std::to_string(b.feature_dims) + " != v" + std::to_string(layout::kFeatureLayoutVersion) +
                    "/" + std::to_string(layout::kFeatureDims));
  }
  return b;
}

void save_bundle(const fs::path& path, const ClassifierBundle& bundle) {
  const auto bytes = serialize_bundle(bundle);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ClassifierBundle load_bundle(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingDependency, "no model at " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_bundle(bytes);
}

}  // namespace geovid
