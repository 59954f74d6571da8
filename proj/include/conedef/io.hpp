#pragma once
// Run configuration, the CSV grid format with axis metadata, deterministic
// JSON summaries, and atomic file writes. Every format the front end reads or
// writes is defined here so the contracts stay in one place (documented in
// docs/formats.md).

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "conedef/grid.hpp"

namespace conedef {

using Json = nlohmann::json;

// Writes through a sibling temp file and renames it into place, so a reader
// never observes a partial artifact. Parent directories are created.
void write_text_atomic(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

// Two-space indentation, sorted keys, trailing newline, no timestamps:
// identical content means identical bytes.
void write_json_atomic(const std::string& path, const Json& j);
Json read_json(const std::string& path);

// CSV grid format: one '# axis,<name>,<origin>,<spacing>,<count>' line per
// axis, a header row with the component names, then one data row per node in
// row-major order (last axis fastest). Doubles carry enough digits to
// round-trip exactly.
void write_field_csv(const std::string& path, const Field& f,
                     const std::vector<std::string>& comps);
Field read_field_csv(const std::string& path, std::vector<std::string>* comps = nullptr);

// Seed profile for one transport family: a constant level, a polynomial in
// the seed-line coordinate, or the conformal-exponential family
// value - factor * e^{-2 lambda} tied to the gallery arc.
struct ProfileSpec {
    std::string kind = "constant";  // constant | poly | lambda_exp
    double value = 1.0;
    double factor = 0.5;            // lambda_exp only
    std::vector<double> coef;       // poly only, low order first
};

struct CandidateSpec {
    std::string name;
    ProfileSpec U, V;
    int expect = -1;  // 1 member, 0 non-member, -1 unasserted
};

struct GridSpec2 {
    int count_u = 64, count_v = 64;
    double spacing = 0.01;
};

// Adapted grid of the hypersurface side: (u, v) plus one axis per normal
// sphere angle, windows centered on the straight-angle configuration.
struct GridSpecM {
    int count_u = 32, count_v = 32;
    std::vector<int> fiber_counts = {8, 5, 5, 5};
    double spacing = 0.05;
    double fiber_spacing = 0.05;
};

struct RunConfig {
    double circle_r = 0.8;       // radius of the circle fiber of the gallery
    double beta_c = 0.0;         // arc offset for the surface-level commands
    double deform_beta_c = 2.0;  // arc offset for the hypersurface pipeline
    int ambient = 9;
    GridSpec2 surface_grid;
    GridSpecM m_grid;
    double membership_c = 10.0;  // membership bar is C * h^2 * sup|rho|
    double tol_scale = 1.0;
    std::uint64_t seed = 20240817;
    std::vector<CandidateSpec> candidates;  // empty -> builtin set
    std::string hypersurface_csv;           // optional external pipeline input
};

RunConfig default_config();
// Rejects unknown keys so config typos cannot silently fall back to defaults.
RunConfig config_from_json(const Json& j);
Json config_to_json(const RunConfig& c);
// FNV-1a over the canonical dump; stable across platforms and runs.
std::uint64_t config_hash(const RunConfig& c);

// The default candidate set: two constant members, the conformal-exponential
// member, and the polynomial non-member.
std::vector<CandidateSpec> builtin_candidates();

struct Verdict {
    std::string name;
    bool pass = false;
    double value = 0;
    double bound = 0;
    std::string direction;  // "<=" or ">"
};

// Accumulates named sections of raw residuals plus thresholded verdicts; the
// JSON keeps the raw value next to every verdict so a reader can re-threshold.
struct ReportBundle {
    Json sections = Json::object();
    std::vector<Verdict> verdicts;

    void require_below(const std::string& name, double value, double bound);
    void require_above(const std::string& name, double value, double bound);
    bool all_pass() const;
    Json to_json(const RunConfig& cfg) const;
};

Json reducer_json(const MaxAbs& r, const GridChart& chart);
Json reducer_json(const MinVal& r, const GridChart& chart);

} // namespace conedef
