#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fundmatch/features.hpp"
#include "fundmatch/graph.hpp"

namespace fundmatch {

struct WorldConfig {
  int n_funds = 100;
  int n_startups = 400;
  int n_sectors = 4;
  // Latent sub-communities within each sector. They shape who invests in
  // whom but leave no trace in tags or descriptions, so they are only
  // recoverable from the investment graph. Ignored when n_sectors == 1 so
  // the single-sector world stays fully symmetric.
  int niches_per_sector = 1;
  double niche_weight = 0.6;  // contribution of the niche match to the score
  int year_min = 2014;
  int year_max = 2024;
  double activity_skew = 0.6;  // fund activity weight ~ (rank+1)^-skew
  double mean_degree = 4.5;    // target mean unique investments per fund
  double noise = 0.0;          // label-flip blend on the planted probability
  double temperature = 0.25;
  double tag_fidelity = 0.93;        // P(startup carries its sector tag)
  double description_fidelity = 0.5; // fraction of sector words in descriptions
  double missing_rate = 0.1;         // P(a feature field is dropped)
  double followon_rate = 0.15;       // P(an extra later round for a pair)
  std::uint64_t seed = 1;

  void validate() const;
};

struct PlantedStartup {
  std::string key;
  int sector = 0;
  int niche = 0;
  int founding_year = 0;
  std::vector<double> latent;  // prototype + niche component
};

struct PlantedFund {
  std::string key;
  int preferred_sector = 0;
  int preferred_niche = 0;
  double activity_weight = 0.0;
  std::vector<double> preference;  // same space as startup latents
};

struct PlantedWorld {
  WorldConfig config;
  std::vector<PlantedFund> funds;
  std::vector<PlantedStartup> startups;
  std::vector<std::vector<double>> sector_prototypes;

  const PlantedFund& fund(const std::string& key) const;
  const PlantedStartup& startup(const std::string& key) const;
};

// Deterministic given config.seed. Startups are spread round-robin over
// sectors and niches, so sectors stay roughly balanced.
PlantedWorld generate_world(const WorldConfig& config);

// sigmoid(u_f . v_c / temperature), blended with the label-flip noise:
// p' = (1 - noise) * p + noise * (1 - p).
double ground_truth_prob(const PlantedWorld& world, const std::string& fund_key,
                         const std::string& startup_key);

// Year-by-year event sampling: funds fire proportionally to their skewed
// activity weights, targets are drawn among already-founded startups with
// probability proportional to the planted compatibility. At most one
// first-investment per pair; follow-on rounds (dropped later by dedup) are
// added with followon_rate.
std::vector<InvestmentEvent> generate_events(const PlantedWorld& world);

// Feature records consistent with the world: tags and description tokens
// carry the sector (but never the niche), numericals grow with age, and
// missing_rate of the fields are dropped to exercise imputation.
RecordSet generate_features(const PlantedWorld& world);

}  // namespace fundmatch
