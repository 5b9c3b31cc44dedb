#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "vot/cohort.hpp"

namespace vot {

inline std::string version_to_string(Version v) {
  switch (v) {
    case Version::A: return "a";
    case Version::B: return "b";
    default: return "";
  }
}

inline Version version_from_string(const std::string& s) {
  if (s == "a") return Version::A;
  if (s == "b") return Version::B;
  if (s.empty()) return Version::None;
  fail(errc::invalid_input, "unknown version '" + s + "'");
}

inline nlohmann::json cohort_to_json(const Cohort& c) {
  nlohmann::json j;
  j["schema"] = "1";
  j["version_arm"] = (c.version_arm == VersionArm::Control) ? "control" : "treated";
  j["covariate_names"] = c.covariate_names;
  std::vector<std::optional<int>> set_of(c.units.size());
  for (const auto& s : c.sets)
    for (std::size_t idx : s.members) set_of[idx] = s.set_id;
  nlohmann::json units = nlohmann::json::array();
  for (std::size_t i = 0; i < c.units.size(); ++i) {
    const Unit& u = c.units[i];
    nlohmann::json ju{{"id", u.id},
                      {"treated", u.treated},
                      {"version", version_to_string(u.version)},
                      {"outcome", u.outcome},
                      {"covariates", u.covariates}};
    if (set_of[i]) ju["set_id"] = *set_of[i];
    else ju["set_id"] = nullptr;
    units.push_back(std::move(ju));
  }
  j["units"] = std::move(units);
  return j;
}

inline Cohort cohort_from_json(const nlohmann::json& j) {
  Cohort c;
  try {
    c.version_arm = (j.at("version_arm").get<std::string>() == "treated")
                        ? VersionArm::Treated
                        : VersionArm::Control;
    c.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
    std::unordered_map<int, MatchedSet> sets;
    std::vector<int> order;
    for (const auto& ju : j.at("units")) {
      Unit u;
      u.id = ju.at("id").get<std::string>();
      u.treated = ju.at("treated").get<bool>();
      u.version = version_from_string(ju.at("version").get<std::string>());
      u.outcome = ju.at("outcome").get<double>();
      u.covariates = ju.at("covariates").get<std::vector<double>>();
      c.has_versions = c.has_versions || u.version != Version::None;
      c.units.push_back(std::move(u));
      if (ju.contains("set_id") && !ju.at("set_id").is_null()) {
        const int sid = ju.at("set_id").get<int>();
        auto [it, inserted] = sets.try_emplace(sid);
        if (inserted) {
          it->second.set_id = sid;
          order.push_back(sid);
        }
        it->second.members.push_back(c.units.size() - 1);
        ++it->second.size;
        if (c.units.back().treated) ++it->second.treated_count;
      }
    }
    for (int sid : order) c.sets.push_back(std::move(sets[sid]));
  } catch (const nlohmann::json::exception& e) {
    fail(errc::invalid_input, std::string("bad cohort JSON: ") + e.what());
  }
  validate(c);
  return c;
}

}  // namespace vot
