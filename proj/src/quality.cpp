#include "cqa/quality.hpp"

#include <cmath>
#include <fstream>

#include "cqa/stats.hpp"

namespace cqa {

std::string to_string(DirectionMode m) {
  return m == DirectionMode::paper_literal ? "paper-literal"
                                           : "prevalence-consistent";
}

DirectionMode parse_direction_mode(const std::string& s) {
  if (s == "prevalence-consistent") return DirectionMode::prevalence_consistent;
  if (s == "paper-literal") return DirectionMode::paper_literal;
  throw ValidationError("unknown direction mode '" + s + "'");
}

std::string to_string(Quality q) { return q == Quality::high ? "high" : "low"; }

Quality parse_quality(const std::string& s) {
  if (s == "high") return Quality::high;
  if (s == "low") return Quality::low;
  throw ValidationError("unknown quality label '" + s + "'");
}

std::string to_string(Check c) {
  switch (c) {
  case Check::dsc:
    return "dsc";
  case Check::hd95:
    return "hd95";
  case Check::msd:
    return "msd";
  }
  return "?";
}

std::string QualityLabel::failed_string() const {
  std::string out;
  for (auto c : failed_checks) {
    if (!out.empty()) out += ';';
    out += to_string(c);
  }
  return out;
}

QualityThresholds fit_thresholds(const std::vector<MetricTriple>& triples,
                                 const std::string& organ, DirectionMode mode) {
  if (triples.size() < 2) {
    throw ValidationError("fit_thresholds needs at least 2 samples for organ " + organ);
  }
  std::vector<double> d, h, m;
  for (const auto& t : triples) {
    d.push_back(t.dsc);
    h.push_back(t.hd95);
    m.push_back(t.msd);
  }
  QualityThresholds out;
  out.organ = organ;
  out.direction_mode = mode;
  out.samples = triples.size();
  out.mean_dsc = mean(d);
  out.sigma_dsc = sample_std(d);
  out.mean_hd95 = mean(h);
  out.sigma_hd95 = sample_std(h);
  out.mean_msd = mean(m);
  out.sigma_msd = sample_std(m);
  return out;
}

QualityLabel label(const MetricTriple& m, const QualityThresholds& t) {
  QualityLabel out;
  bool dsc_ok, hd_ok, msd_ok;
  if (t.direction_mode == DirectionMode::prevalence_consistent) {
    dsc_ok = m.dsc >= t.mean_dsc - t.sigma_dsc;
    hd_ok = m.hd95 <= t.mean_hd95 + t.sigma_hd95;
    msd_ok = m.msd <= t.mean_msd + t.sigma_msd;
  } else {
    dsc_ok = m.dsc > t.mean_dsc + t.sigma_dsc;
    hd_ok = m.hd95 < t.mean_hd95 - t.sigma_hd95;
    msd_ok = m.msd < t.mean_msd - t.sigma_msd;
  }
  if (!dsc_ok) out.failed_checks.push_back(Check::dsc);
  if (!hd_ok) out.failed_checks.push_back(Check::hd95);
  if (!msd_ok) out.failed_checks.push_back(Check::msd);
  out.value = out.failed_checks.empty() ? Quality::high : Quality::low;
  return out;
}

nlohmann::json to_json(const QualityThresholds& t) {
  return {{"mean_dsc", t.mean_dsc},   {"sigma_dsc", t.sigma_dsc},
          {"mean_hd95", t.mean_hd95}, {"sigma_hd95", t.sigma_hd95},
          {"mean_msd", t.mean_msd},   {"sigma_msd", t.sigma_msd},
          {"direction_mode", to_string(t.direction_mode)},
          {"samples", t.samples}};
}

QualityThresholds thresholds_from_json(const std::string& organ,
                                       const nlohmann::json& j) {
  QualityThresholds t;
  t.organ = organ;
  try {
    t.mean_dsc = j.at("mean_dsc").get<double>();
    t.sigma_dsc = j.at("sigma_dsc").get<double>();
    t.mean_hd95 = j.at("mean_hd95").get<double>();
    t.sigma_hd95 = j.at("sigma_hd95").get<double>();
    t.mean_msd = j.at("mean_msd").get<double>();
    t.sigma_msd = j.at("sigma_msd").get<double>();
    t.direction_mode = parse_direction_mode(j.at("direction_mode").get<std::string>());
    t.samples = j.value("samples", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("thresholds for " + organ + ": " + e.what());
  }
  if (t.sigma_dsc < 0 || t.sigma_hd95 < 0 || t.sigma_msd < 0) {
    throw ValidationError("thresholds for " + organ + " have a negative sigma");
  }
  return t;
}

void save_thresholds(const ThresholdSet& set, const std::string& path) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [organ, t] : set) {
    j[organ] = to_json(t);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  out << j.dump(2) << '\n';
}

ThresholdSet load_thresholds(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed thresholds file: " + std::string(e.what()));
  }
  if (!j.is_object()) {
    throw FormatError("thresholds file must hold a JSON object");
  }
  ThresholdSet set;
  for (auto it = j.begin(); it != j.end(); ++it) {
    set[it.key()] = thresholds_from_json(it.key(), it.value());
  }
  return set;
}

} // namespace cqa
