#include "geovid/bootstrap.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <tuple>

#include <spdlog/spdlog.h>

#include "geovid/error.hpp"
#include "geovid/inference.hpp"
#include "geovid/parallel.hpp"

namespace geovid {

std::uint64_t segment_id(std::uint32_t video, int level, int frame, RegionId region) {
  if (level < 0 || level > 0xff || frame < 0 || frame > 0xfff || region > 0xfffff || video > 0xffffff) {
    throw Error(ErrorCode::InvalidSpec, "segment key out of range");
  }
  return (std::uint64_t(video) << 40) | (std::uint64_t(level) << 32) | (std::uint64_t(frame) << 20) | region;
}

std::size_t BootstrapState::original_count() const {
  return static_cast<std::size_t>(
      std::count_if(labeled.begin(), labeled.end(), [](const PoolExample& e) { return e.original; }));
}

LabeledSet BootstrapState::training_set() const {
  LabeledSet out;
  out.x.reserve(labeled.size() * layout::kFeatureDims);
  for (const auto& e : labeled) out.append(e.x, e.label);
  return out;
}

namespace {

std::vector<int> resolve_levels(const PreparedVideo& v, const std::vector<double>& fractions) {
  std::vector<int> levels;
  for (double f : fractions) {
    const int l = v.hierarchy.level_for_fraction(f);
    if (l < 0) throw Error(ErrorCode::MissingDependency, v.id + ": no level at fraction " + std::to_string(f));
    levels.push_back(l);
  }
  return levels;
}

}  // namespace

BootstrapState make_bootstrap_state(const std::vector<const PreparedVideo*>& labeled,
                                    const std::vector<const PreparedVideo*>& unlabeled,
                                    const std::vector<double>& level_fractions, const BootstrapParams& params) {
  BootstrapState st;
  st.params = params;
  std::uint32_t vid = 0;
  for (const PreparedVideo* v : labeled) {
    if (!v->level_labels) throw Error(ErrorCode::MissingDependency, v->id + " has no ground truth");
    for (int level : resolve_levels(*v, level_fractions)) {
      const auto& labels = (*v->level_labels)[level];
      for (std::size_t j = 0; j < v->features.at(level).size(); ++j) {
        for (const auto& rec : v->features[level][j]) {
          PoolExample e;
          e.segment = segment_id(vid, level, static_cast<int>(j), rec.region);
          e.x = rec.x;
          e.label = labels[rec.region];
          e.original = true;
          st.labeled.push_back(e);
        }
      }
    }
    ++vid;
  }
  for (const PreparedVideo* v : unlabeled) {
    for (int level : resolve_levels(*v, level_fractions)) {
      for (std::size_t j = 0; j < v->features.at(level).size(); ++j) {
        for (const auto& rec : v->features[level][j]) {
          st.unlabeled.push_back({segment_id(vid, level, static_cast<int>(j), rec.region), rec.x});
        }
      }
    }
    ++vid;
  }
  std::sort(st.unlabeled.begin(), st.unlabeled.end(),
            [](const UnlabeledSegment& a, const UnlabeledSegment& b) { return a.segment < b.segment; });
  return st;
}

std::vector<Admission> select_admissions(const std::vector<ScoredSegment>& scored, const BootstrapParams& params) {
  std::array<std::vector<Admission>, 3> per_class;
  for (const auto& s : scored) {
    const auto& p = s.posterior;
    const int m = argmax3(p.main);
    const double conf = p.main[m];
    if (conf < params.posterior_min || p.homogeneity < params.homogeneity_min) continue;
    GeoLabel label = kMainClasses[m];
    if (label == GeoLabel::Vertical) {
      const int k = argmax3(p.subvertical);
      if (p.subvertical[k] >= params.posterior_min) label = kSubVerticalClasses[k];
    }
    per_class[m].push_back({s.segment, label, conf, p.homogeneity});
  }
  std::vector<Admission> out;
  for (auto& c : per_class) {
    std::sort(c.begin(), c.end(), [](const Admission& a, const Admission& b) {
      return std::tie(a.confidence, a.homogeneity, a.segment) > std::tie(b.confidence, b.homogeneity, b.segment);
    });
    if (c.size() > params.per_class_quota) c.resize(params.per_class_quota);
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

IntrospectionResult introspect_pool(BootstrapState& state, const ClassifierBundle& bundle) {
  IntrospectionResult res;
  std::vector<PoolExample> kept;
  kept.reserve(state.labeled.size());
  for (auto& e : state.labeled) {
    if (e.original) {
      kept.push_back(std::move(e));
      continue;
    }
    const Posterior p = predict_posterior(bundle, e.x);
    const double conf = *std::max_element(p.main.begin(), p.main.end());
    if (conf < state.params.posterior_min) {
      res.evicted.push_back(e.segment);
      state.unlabeled.push_back({e.segment, e.x});
    } else {
      res.retained.push_back(e.segment);
      kept.push_back(std::move(e));
    }
  }
  state.labeled = std::move(kept);
  if (!res.evicted.empty()) {
    std::sort(state.unlabeled.begin(), state.unlabeled.end(),
              [](const UnlabeledSegment& a, const UnlabeledSegment& b) { return a.segment < b.segment; });
    state.needs_retrain = true;
  }
  return res;
}

RoundReport bootstrap_round(BootstrapState& state, ClassifierBundle& bundle) {
  RoundReport rep;
  std::vector<ScoredSegment> scored(state.unlabeled.size());
  parallel_for(scored.size(), [&](std::size_t i) {
    scored[i] = {state.unlabeled[i].segment, predict_posterior(bundle, state.unlabeled[i].x)};
  });
  const auto admissions = select_admissions(scored, state.params);

  if (!admissions.empty()) {
    std::vector<const Admission*> by_id;
    for (const auto& a : admissions) by_id.push_back(&a);
    std::sort(by_id.begin(), by_id.end(), [](const Admission* a, const Admission* b) { return a->segment < b->segment; });
    std::vector<UnlabeledSegment> remaining;
    remaining.reserve(state.unlabeled.size() - admissions.size());
    std::size_t k = 0;
    for (auto& u : state.unlabeled) {
      if (k < by_id.size() && by_id[k]->segment == u.segment) {
        const Admission& a = *by_id[k++];
        PoolExample e;
        e.segment = u.segment;
        e.x = u.x;
        e.label = a.label;
        e.original = false;
        e.admit_iteration = state.iteration;
        e.confidence = a.confidence;
        e.homogeneity = a.homogeneity;
        state.labeled.push_back(e);
        rep.admitted_per_main_class[main_label(a.label)]++;
      } else {
        remaining.push_back(std::move(u));
      }
    }
    state.unlabeled = std::move(remaining);
    rep.admitted = admissions.size();
  }
  rep.pool_size_after_admission = state.labeled.size();

  if (rep.admitted > 0 || state.needs_retrain) {
    bundle = train_bundle(state.training_set(), state.params.boost);
    state.needs_retrain = false;
    rep.retrained = true;
  }
  ++state.iteration;
  rep.iteration = state.iteration;
  if (state.params.introspection_period > 0 && state.iteration % state.params.introspection_period == 0) {
    rep.introspected = true;
    rep.introspection = introspect_pool(state, bundle);
  }
  rep.pool_size = state.labeled.size();
  spdlog::info("bootstrap iteration {}: admitted {}, evicted {}, pool {}", rep.iteration, rep.admitted,
               rep.introspection.evicted.size(), rep.pool_size);
  return rep;
}

std::string bootstrap_csv(const std::vector<BootstrapMetrics>& rows) {
  std::ostringstream os;
  os << "iteration,pool_size,admitted,evicted,main_accuracy,subvertical_accuracy\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%d,%zu,%zu,%zu,%.4f,%.4f\n", r.iteration, r.pool_size, r.admitted, r.evicted,
                  r.main_accuracy, r.subvertical_accuracy);
    os << buf;
  }
  return os.str();
}

}  // namespace geovid
