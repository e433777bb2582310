#include "cacmda/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cacmda/rng.hpp"

namespace cacmda {

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusKm = 6371.0;
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * deg;
  const double dlon = (lon2 - lon1) * deg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * deg) * std::cos(lat2 * deg) *
                       std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

double haversine_km(const SiteId& a, const SiteId& b) {
  return haversine_km(a.lat, a.lon, b.lat, b.lon);
}

FinetuneStrategy parse_finetune_strategy(const std::string& s) {
  if (s == "none" || s == "-") return FinetuneStrategy::kNone;
  if (s == "random") return FinetuneStrategy::kRandom;
  if (s == "closest") return FinetuneStrategy::kClosest;
  if (s == "farthest") return FinetuneStrategy::kFarthest;
  throw std::invalid_argument("unknown fine-tune strategy: " + s);
}

std::string to_string(FinetuneStrategy s) {
  switch (s) {
    case FinetuneStrategy::kNone: return "none";
    case FinetuneStrategy::kRandom: return "random";
    case FinetuneStrategy::kClosest: return "closest";
    case FinetuneStrategy::kFarthest: return "farthest";
  }
  return "?";
}

SiteId select_finetune_env(FinetuneStrategy strategy, const SiteId& test_site,
                           const std::vector<SiteId>& candidates,
                           std::uint64_t seed) {
  if (candidates.empty())
    throw std::invalid_argument("select_finetune_env: empty candidate set");
  for (const auto& c : candidates)
    if (c.code == test_site.code)
      throw std::invalid_argument(
          "select_finetune_env: test site among candidates: " + c.code);

  std::vector<SiteId> sorted = candidates;
  std::sort(sorted.begin(), sorted.end(),
            [](const SiteId& a, const SiteId& b) { return a.code < b.code; });

  switch (strategy) {
    case FinetuneStrategy::kRandom: {
      Rng rng(seed);
      return sorted[rng.index(sorted.size())];
    }
    case FinetuneStrategy::kClosest: {
      return *std::min_element(sorted.begin(), sorted.end(),
                               [&](const SiteId& a, const SiteId& b) {
                                 return haversine_km(test_site, a) <
                                        haversine_km(test_site, b);
                               });
    }
    case FinetuneStrategy::kFarthest: {
      return *std::max_element(
          sorted.begin(), sorted.end(), [&](const SiteId& a, const SiteId& b) {
            // strict < keeps the first (lexicographically smallest) on ties
            return haversine_km(test_site, a) < haversine_km(test_site, b);
          });
    }
    case FinetuneStrategy::kNone:
      throw std::invalid_argument("select_finetune_env: strategy is none");
  }
  throw std::logic_error("unreachable");
}

const std::vector<SiteId>& g2f_sites() {
  static const std::vector<SiteId> sites = {
      {"deh", "Delaware", 38.91, -75.58},
      {"gah", "Georgia", 33.87, -83.45},
      {"geh", "Germany", 51.82, 9.87},
      {"iah", "Iowa", 42.01, -93.64},
      {"ilh", "Illinois", 40.06, -88.23},
      {"mih", "Michigan", 46.34, -86.92},
  };
  return sites;
}

}  // namespace cacmda
