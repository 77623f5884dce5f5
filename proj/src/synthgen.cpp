#include "fundmatch/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fundmatch/errors.hpp"
#include "fundmatch/rng.hpp"

namespace fundmatch {

void WorldConfig::validate() const {
  if (n_funds < 1 || n_startups < 1 || n_sectors < 1 || niches_per_sector < 1)
    throw DataError("world config: counts must be >= 1");
  if (year_min > year_max) throw DataError("world config: year_min > year_max");
  if (noise < 0.0 || noise > 1.0) throw DataError("world config: noise must be in [0, 1]");
  if (!(temperature > 0.0)) throw DataError("world config: temperature must be > 0");
  if (!(mean_degree > 0.0)) throw DataError("world config: mean_degree must be > 0");
  if (tag_fidelity < 0.0 || tag_fidelity > 1.0)
    throw DataError("world config: tag_fidelity must be in [0, 1]");
  if (missing_rate < 0.0 || missing_rate > 1.0)
    throw DataError("world config: missing_rate must be in [0, 1]");
}

namespace {

std::string padded_key(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%05d", prefix, i);
  return buf;
}

// Zero-sum one-hot: +1 on the chosen slot, -1/(k-1) elsewhere (all +1 when
// k == 1). Keeps match vs mismatch scores symmetric around zero.
std::vector<double> contrast_vector(int slot, int k) {
  std::vector<double> v(k, k > 1 ? -1.0 / static_cast<double>(k - 1) : 1.0);
  v[slot] = 1.0;
  return v;
}

}  // namespace

const PlantedFund& PlantedWorld::fund(const std::string& key) const {
  for (const auto& f : funds)
    if (f.key == key) return f;
  throw DataError("planted world: unknown fund " + key);
}

const PlantedStartup& PlantedWorld::startup(const std::string& key) const {
  for (const auto& s : startups)
    if (s.key == key) return s;
  throw DataError("planted world: unknown startup " + key);
}

PlantedWorld generate_world(const WorldConfig& config) {
  config.validate();
  PlantedWorld world;
  world.config = config;
  const int sectors = config.n_sectors;
  const int niches = sectors == 1 ? 1 : config.niches_per_sector;
  const int latent_dim = sectors + sectors * niches;
  const double gamma = std::sqrt(std::max(0.0, config.niche_weight));

  for (int k = 0; k < sectors; ++k) {
    std::vector<double> proto(latent_dim, 0.0);
    proto[k] = 1.0;
    world.sector_prototypes.push_back(std::move(proto));
  }

  std::mt19937_64 rng(mix_seed(config.seed, 0x574f524cULL));

  world.startups.reserve(config.n_startups);
  const int years = config.year_max - config.year_min + 1;
  for (int i = 0; i < config.n_startups; ++i) {
    PlantedStartup s;
    s.key = padded_key('S', i + 1);
    s.sector = i % sectors;
    s.niche = (i / sectors) % niches;
    s.founding_year = config.year_min + static_cast<int>(uniform_below(rng, years));
    s.latent.assign(latent_dim, 0.0);
    s.latent[s.sector] = 1.0;
    if (niches > 1) s.latent[sectors + s.sector * niches + s.niche] = gamma;
    world.startups.push_back(std::move(s));
  }

  world.funds.reserve(config.n_funds);
  for (int i = 0; i < config.n_funds; ++i) {
    PlantedFund f;
    f.key = padded_key('F', i + 1);
    f.preferred_sector = static_cast<int>(uniform_below(rng, sectors));
    f.preferred_niche = static_cast<int>(uniform_below(rng, niches));
    f.activity_weight = std::pow(static_cast<double>(i + 1), -config.activity_skew);
    f.preference.assign(latent_dim, 0.0);
    auto sector_part = contrast_vector(f.preferred_sector, sectors);
    for (int k = 0; k < sectors; ++k) f.preference[k] = sector_part[k];
    if (niches > 1) {
      auto niche_part = contrast_vector(f.preferred_niche, niches);
      for (int m = 0; m < niches; ++m)
        f.preference[sectors + f.preferred_sector * niches + m] = gamma * niche_part[m];
    }
    world.funds.push_back(std::move(f));
  }
  return world;
}

namespace {

double planted_prob(const PlantedWorld& world, const PlantedFund& fund,
                    const PlantedStartup& startup) {
  double dot = 0.0;
  for (std::size_t d = 0; d < fund.preference.size(); ++d)
    dot += fund.preference[d] * startup.latent[d];
  const double p = 1.0 / (1.0 + std::exp(-dot / world.config.temperature));
  const double n = world.config.noise;
  return (1.0 - n) * p + n * (1.0 - p);
}

}  // namespace

double ground_truth_prob(const PlantedWorld& world, const std::string& fund_key,
                         const std::string& startup_key) {
  return planted_prob(world, world.fund(fund_key), world.startup(startup_key));
}

std::vector<InvestmentEvent> generate_events(const PlantedWorld& world) {
  const WorldConfig& config = world.config;
  std::mt19937_64 rng(mix_seed(config.seed, 0x4556454eULL));

  const long long target_pairs =
      std::llround(config.mean_degree * static_cast<double>(config.n_funds));
  const int years = config.year_max - config.year_min + 1;

  std::set<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<InvestmentEvent> events;
  std::vector<double> fund_cdf(world.funds.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < world.funds.size(); ++i) {
    acc += world.funds[i].activity_weight;
    fund_cdf[i] = acc;
  }

  std::vector<double> weights(world.startups.size());
  for (int y = config.year_min; y <= config.year_max; ++y) {
    // Even yearly budget, remainder spread over the earliest years.
    long long budget = target_pairs / years;
    if (y - config.year_min < static_cast<int>(target_pairs % years)) ++budget;
    for (long long e = 0; e < budget; ++e) {
      const double uf = uniform01(rng) * acc;
      const std::size_t fi = static_cast<std::size_t>(
          std::lower_bound(fund_cdf.begin(), fund_cdf.end(), uf) - fund_cdf.begin());
      const PlantedFund& fund = world.funds[std::min(fi, world.funds.size() - 1)];

      double total = 0.0;
      for (std::size_t si = 0; si < world.startups.size(); ++si) {
        const PlantedStartup& s = world.startups[si];
        const bool alive = s.founding_year <= y;
        const bool taken = pairs.count({fi, si}) > 0;
        weights[si] = alive && !taken ? planted_prob(world, fund, s) : 0.0;
        total += weights[si];
      }
      if (total <= 0.0) continue;
      double us = uniform01(rng) * total;
      std::size_t chosen = world.startups.size() - 1;
      for (std::size_t si = 0; si < world.startups.size(); ++si) {
        us -= weights[si];
        if (us < 0.0) {
          chosen = si;
          break;
        }
      }
      pairs.insert({fi, chosen});
      InvestmentEvent event;
      event.fund = fund_id(fund.key);
      event.startup = startup_id(world.startups[chosen].key);
      event.time = {y, 1 + static_cast<int>(uniform_below(rng, 12))};
      event.investor_type = uniform01(rng) < 0.7 ? "vc" : "corporate";
      events.push_back(event);
      // Occasional follow-on round in a later year; the dedup rule drops it.
      if (uniform01(rng) < config.followon_rate && y < config.year_max) {
        InvestmentEvent followon = event;
        followon.time = {y + 1 + static_cast<int>(uniform_below(
                                 rng, static_cast<std::uint64_t>(config.year_max - y))),
                         1 + static_cast<int>(uniform_below(rng, 12))};
        events.push_back(followon);
      }
    }
  }
  return events;
}

namespace {

const char* kGenericWords[] = {
    "platform", "solution",  "service", "customer", "market",   "digital", "product",
    "growth",   "business",  "team",    "global",   "users",    "network", "mobile",
    "support",  "company",   "value",   "industry", "partners", "scale",   "launch",
    "build",    "technology", "future",  "leading",  "focus",    "vision",  "mission",
    "quality",  "experience"};

const char* kSectorWords[][15] = {
    {"payments", "banking", "ledger", "credit", "lending", "fintech", "wallet", "trading",
     "insurance", "settlement", "remittance", "compliance", "capital", "invoice", "treasury"},
    {"diagnosis", "clinical", "patients", "therapy", "biotech", "medical", "genomics", "hospital",
     "trials", "imaging", "oncology", "telehealth", "vaccine", "devices", "pharma"},
    {"checkout", "retail", "marketplace", "logistics", "delivery", "commerce", "inventory",
     "shoppers", "fulfillment", "storefront", "merchants", "catalog", "orders", "shipping",
     "warehouse"},
    {"models", "training", "inference", "neural", "dataset", "robotics", "vision", "language",
     "automation", "agents", "compute", "learning", "prediction", "sensors", "algorithms"},
    {"tenants", "buildings", "leasing", "mortgage", "property", "housing", "construction",
     "brokers", "zoning", "architecture", "renovation", "listings", "valuation", "estate",
     "development"},
    {"streaming", "creators", "audience", "gaming", "studio", "content", "publishing", "video",
     "social", "entertainment", "music", "community", "subscribers", "media", "advertising"}};
constexpr int kSectorWordSets = 6;

const char* kLocations[] = {"tokyo", "osaka", "fukuoka", "nagoya", "sapporo", "kyoto"};
const char* kStages[] = {"seed", "series_a", "series_b", "series_c"};

}  // namespace

RecordSet generate_features(const PlantedWorld& world) {
  const WorldConfig& config = world.config;
  RecordSet records;
  for (std::size_t si = 0; si < world.startups.size(); ++si) {
    const PlantedStartup& s = world.startups[si];
    std::mt19937_64 rng(mix_seed(config.seed, 0x46454154ULL, si));
    StartupRecord rec;
    rec.id = startup_id(s.key);

    // Tags reveal the sector (noisily); niches stay invisible.
    std::set<std::string> tags;
    if (uniform01(rng) < config.tag_fidelity) tags.insert("sector_" + std::to_string(s.sector));
    if (uniform01(rng) < 0.05 && config.n_sectors > 1) {
      int other = static_cast<int>(uniform_below(rng, config.n_sectors));
      tags.insert("sector_" + std::to_string(other));
    }
    if (uniform01(rng) < 0.3) tags.insert(uniform01(rng) < 0.5 ? "b2b" : "b2c");
    rec.tags.assign(tags.begin(), tags.end());

    if (uniform01(rng) >= config.missing_rate) {
      const char* const* sector_words = kSectorWords[s.sector % kSectorWordSets];
      std::string description;
      const int n_tokens = 8 + static_cast<int>(uniform_below(rng, 8));
      for (int t = 0; t < n_tokens; ++t) {
        if (t) description += ' ';
        if (uniform01(rng) < config.description_fidelity)
          description += sector_words[uniform_below(rng, 15)];
        else
          description += kGenericWords[uniform_below(rng, std::size(kGenericWords))];
      }
      rec.description = description;
    }

    const int age_now = config.year_max - s.founding_year;
    if (uniform01(rng) >= config.missing_rate) {
      int stage_idx = std::min(age_now / 3, 3);
      if (uniform01(rng) < 0.2 && stage_idx > 0) --stage_idx;
      rec.stage = kStages[stage_idx];
    }
    if (uniform01(rng) >= config.missing_rate)
      rec.location = kLocations[uniform_below(rng, std::size(kLocations))];

    const double employee_base = std::exp(1.6 + 0.8 * gaussian(rng));
    const double funding_base = std::exp(4.0 + 1.0 * gaussian(rng));
    for (int y = s.founding_year; y <= config.year_max; ++y) {
      YearValues yv;
      const int age = y - s.founding_year;
      if (uniform01(rng) >= config.missing_rate) yv.age = static_cast<double>(age);
      if (uniform01(rng) >= config.missing_rate)
        yv.employees = std::round(employee_base * std::pow(1.35, age));
      if (uniform01(rng) >= config.missing_rate)
        yv.funding = std::round(funding_base * std::pow(static_cast<double>(age) + 1.0, 1.5));
      rec.by_year[y] = yv;
    }
    records.emplace(s.key, std::move(rec));
  }
  return records;
}

}  // namespace fundmatch
