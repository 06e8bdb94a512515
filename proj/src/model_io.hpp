#pragma once

#include <json.hpp>

#include "json_util.hpp"
#include "lveg/gm.hpp"

namespace lveg::detail {

inline void write_components(std::string& out, const GaussianMixture& m) {
  out += '[';
  for (std::size_t k = 0; k < m.size(); ++k) {
    if (k) out += ',';
    out += "{\"log_weight\":";
    json_number(out, m.log_weight(k));
    out += ",\"mean\":";
    json_numbers(out, m.mean(k));
    out += ",\"variance\":";
    json_numbers(out, m.variance(k));
    out += '}';
  }
  out += ']';
}

inline void read_components(const nlohmann::json& comps, GaussianMixture& m) {
  for (const auto& c : comps) {
    const auto mean = c.at("mean").get<std::vector<double>>();
    const auto var = c.at("variance").get<std::vector<double>>();
    m.add_component(c.at("log_weight").get<double>(), mean, var);
  }
}

}  // namespace lveg::detail
