#pragma once

#include <string>

#include <json.hpp>

#include "ubsgd/bounds.hpp"
#include "ubsgd/certify.hpp"
#include "ubsgd/optimize.hpp"
#include "ubsgd/schedules.hpp"

namespace ubsgd {

using Json = nlohmann::ordered_json;

// Shortest decimal string that parses back to the same double. Non-finite
// values print as "nan", "inf", "-inf".
std::string format_double(double v);

Json to_json(const DissipativityCert& c);
Json to_json(const GrowthCert& g);
Json to_json(const NoiseCert& n);
Json to_json(const CertReport& r);
Json to_json(const BoundReport& r);
Json to_json(const ScheduleAudit& a);
Json to_json(const NoiseEstimate& e);
Json to_json(const LyapunovTest& t);
// Summary statistics only; per-seed series go to CSV.
Json to_json(const EnsembleSummary& e);

DissipativityCert cert_from_json(const Json& j);
GrowthCert growth_from_json(const Json& j);
NoiseCert noise_from_json(const Json& j);

// Header k,stepsize,dist2,fgap,W; one row per k in [1, T+1] (the stepsize
// column is empty on the final row).
std::string trajectory_csv(const Trajectory& t);

// Writes `contents` to `path`, creating parent directories.
void write_file(const std::string& path, const std::string& contents);
std::string dump(const Json& j);

}  // namespace ubsgd
