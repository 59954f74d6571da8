#include "conedef/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace conedef {

namespace fs = std::filesystem;

void write_text_atomic(const std::string& path, const std::string& text) {
    const fs::path target(path);
    if (!target.parent_path().empty()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), "cannot open " + tmp.string() + " for writing");
        out << text;
        out.flush();
        require(out.good(), "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    require(!ec, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_json_atomic(const std::string& path, const Json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
}

Json read_json(const std::string& path) {
    Json j = Json::parse(read_text(path), nullptr, false);
    require(!j.is_discarded(), "invalid JSON in " + path);
    return j;
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_field_csv(const std::string& path, const Field& f,
                     const std::vector<std::string>& comps) {
    require(static_cast<int>(comps.size()) == f.ncomp, "component name count mismatch");
    std::string out;
    out.reserve(f.data.size() * 20 + 256);
    for (const GridAxis& ax : f.chart.axes) {
        out += "# axis," + ax.name + "," + fmt_double(ax.origin) + "," + fmt_double(ax.spacing) +
               "," + std::to_string(ax.count) + "\n";
    }
    for (int c = 0; c < f.ncomp; ++c) {
        if (c) out += ",";
        out += comps[c];
    }
    out += "\n";
    for (std::size_t at = 0; at < f.size(); ++at) {
        for (int c = 0; c < f.ncomp; ++c) {
            if (c) out += ",";
            out += fmt_double(f.at(at, c));
        }
        out += "\n";
    }
    write_text_atomic(path, out);
}

Field read_field_csv(const std::string& path, std::vector<std::string>* comps) {
    std::istringstream in(read_text(path));
    std::string line;
    std::vector<GridAxis> axes;
    std::vector<std::string> names;
    bool header_done = false;
    Field f;
    std::size_t at = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# axis,", 0) == 0) {
            require(!header_done, "axis metadata after data in " + path);
            std::istringstream ls(line.substr(7));
            GridAxis ax;
            std::string tok;
            std::getline(ls, ax.name, ',');
            std::getline(ls, tok, ',');
            ax.origin = std::strtod(tok.c_str(), nullptr);
            std::getline(ls, tok, ',');
            ax.spacing = std::strtod(tok.c_str(), nullptr);
            std::getline(ls, tok, ',');
            ax.count = std::atoi(tok.c_str());
            axes.push_back(ax);
            continue;
        }
        if (line[0] == '#') continue;
        if (!header_done) {
            std::istringstream ls(line);
            std::string tok;
            while (std::getline(ls, tok, ',')) names.push_back(tok);
            require(!axes.empty() && !names.empty(), "missing metadata in " + path);
            f = Field::zeros(GridChart::make(axes), static_cast<int>(names.size()));
            header_done = true;
            continue;
        }
        std::istringstream ls(line);
        std::string tok;
        int c = 0;
        while (std::getline(ls, tok, ',')) {
            require(c < f.ncomp && at < f.size(), "extra data in " + path);
            f.at(at, c++) = std::strtod(tok.c_str(), nullptr);
        }
        require(c == f.ncomp, "short row in " + path);
        ++at;
    }
    require(header_done && at == f.size(), "row count mismatch in " + path);
    if (comps) *comps = names;
    return f;
}

namespace {

Json profile_to_json(const ProfileSpec& p) {
    Json j;
    j["kind"] = p.kind;
    j["value"] = p.value;
    if (p.kind == "lambda_exp") j["factor"] = p.factor;
    if (p.kind == "poly") j["coef"] = p.coef;
    return j;
}

ProfileSpec profile_from_json(const Json& j) {
    ProfileSpec p;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k == "kind")
            p.kind = it.value().get<std::string>();
        else if (k == "value")
            p.value = it.value().get<double>();
        else if (k == "factor")
            p.factor = it.value().get<double>();
        else if (k == "coef")
            p.coef = it.value().get<std::vector<double>>();
        else
            fail("unknown profile key: " + k);
    }
    require(p.kind == "constant" || p.kind == "poly" || p.kind == "lambda_exp",
            "unknown profile kind: " + p.kind);
    return p;
}

std::string expect_name(int e) { return e == 1 ? "member" : (e == 0 ? "non-member" : "unasserted"); }

int expect_from_name(const std::string& s) {
    if (s == "member") return 1;
    if (s == "non-member") return 0;
    if (s == "unasserted") return -1;
    fail("unknown candidate expectation: " + s);
}

Json candidate_to_json(const CandidateSpec& c) {
    Json j;
    j["name"] = c.name;
    j["U"] = profile_to_json(c.U);
    j["V"] = profile_to_json(c.V);
    j["expect"] = expect_name(c.expect);
    return j;
}

CandidateSpec candidate_from_json(const Json& j) {
    CandidateSpec c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k == "name")
            c.name = it.value().get<std::string>();
        else if (k == "U")
            c.U = profile_from_json(it.value());
        else if (k == "V")
            c.V = profile_from_json(it.value());
        else if (k == "expect")
            c.expect = expect_from_name(it.value().get<std::string>());
        else
            fail("unknown candidate key: " + k);
    }
    require(!c.name.empty(), "candidate without a name");
    return c;
}

} // namespace

RunConfig default_config() { return RunConfig{}; }

Json config_to_json(const RunConfig& c) {
    Json j;
    j["gallery"] = {{"circle_r", c.circle_r},
                    {"beta_c", c.beta_c},
                    {"deform_beta_c", c.deform_beta_c},
                    {"ambient", c.ambient}};
    j["surface_grid"] = {{"count_u", c.surface_grid.count_u},
                         {"count_v", c.surface_grid.count_v},
                         {"spacing", c.surface_grid.spacing}};
    j["m_grid"] = {{"count_u", c.m_grid.count_u},
                   {"count_v", c.m_grid.count_v},
                   {"fiber_counts", c.m_grid.fiber_counts},
                   {"spacing", c.m_grid.spacing},
                   {"fiber_spacing", c.m_grid.fiber_spacing}};
    j["tolerances"] = {{"membership_c", c.membership_c}, {"tol_scale", c.tol_scale}};
    j["seed"] = c.seed;
    Json cands = Json::array();
    for (const CandidateSpec& cs : c.candidates) cands.push_back(candidate_to_json(cs));
    j["candidates"] = cands;
    if (!c.hypersurface_csv.empty()) j["hypersurface_csv"] = c.hypersurface_csv;
    return j;
}

RunConfig config_from_json(const Json& j) {
    RunConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const Json& v = it.value();
        if (k == "gallery") {
            for (auto g = v.begin(); g != v.end(); ++g) {
                if (g.key() == "circle_r")
                    c.circle_r = g.value().get<double>();
                else if (g.key() == "beta_c")
                    c.beta_c = g.value().get<double>();
                else if (g.key() == "deform_beta_c")
                    c.deform_beta_c = g.value().get<double>();
                else if (g.key() == "ambient")
                    c.ambient = g.value().get<int>();
                else
                    fail("unknown gallery key: " + g.key());
            }
        } else if (k == "surface_grid") {
            for (auto g = v.begin(); g != v.end(); ++g) {
                if (g.key() == "count_u")
                    c.surface_grid.count_u = g.value().get<int>();
                else if (g.key() == "count_v")
                    c.surface_grid.count_v = g.value().get<int>();
                else if (g.key() == "spacing")
                    c.surface_grid.spacing = g.value().get<double>();
                else
                    fail("unknown surface_grid key: " + g.key());
            }
        } else if (k == "m_grid") {
            for (auto g = v.begin(); g != v.end(); ++g) {
                if (g.key() == "count_u")
                    c.m_grid.count_u = g.value().get<int>();
                else if (g.key() == "count_v")
                    c.m_grid.count_v = g.value().get<int>();
                else if (g.key() == "fiber_counts")
                    c.m_grid.fiber_counts = g.value().get<std::vector<int>>();
                else if (g.key() == "spacing")
                    c.m_grid.spacing = g.value().get<double>();
                else if (g.key() == "fiber_spacing")
                    c.m_grid.fiber_spacing = g.value().get<double>();
                else
                    fail("unknown m_grid key: " + g.key());
            }
        } else if (k == "tolerances") {
            for (auto g = v.begin(); g != v.end(); ++g) {
                if (g.key() == "membership_c")
                    c.membership_c = g.value().get<double>();
                else if (g.key() == "tol_scale")
                    c.tol_scale = g.value().get<double>();
                else
                    fail("unknown tolerances key: " + g.key());
            }
        } else if (k == "seed") {
            c.seed = v.get<std::uint64_t>();
        } else if (k == "candidates") {
            for (const Json& e : v) c.candidates.push_back(candidate_from_json(e));
        } else if (k == "hypersurface_csv") {
            c.hypersurface_csv = v.get<std::string>();
        } else {
            fail("unknown config key: " + k);
        }
    }
    require(c.surface_grid.count_u >= 5 && c.surface_grid.count_v >= 5 &&
                c.m_grid.count_u >= 5 && c.m_grid.count_v >= 5,
            "grid resolutions must be at least 5 per axis");
    for (int fc : c.m_grid.fiber_counts)
        require(fc >= 5, "fiber resolutions must be at least 5 per axis");
    require(c.surface_grid.spacing > 0 && c.m_grid.spacing > 0 && c.m_grid.fiber_spacing > 0,
            "grid spacings must be positive");
    require(c.membership_c > 0 && c.tol_scale > 0, "tolerances must be positive");
    return c;
}

std::uint64_t config_hash(const RunConfig& c) {
    const std::string dump = config_to_json(c).dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<CandidateSpec> builtin_candidates() {
    std::vector<CandidateSpec> out(4);
    out[0].name = "uv_const_1";
    out[0].U = {"constant", 1.0, 0.5, {}};
    out[0].V = {"constant", 1.0, 0.5, {}};
    out[0].expect = 1;
    out[1].name = "v_const_2";
    out[1].U = {"constant", 1.0, 0.5, {}};
    out[1].V = {"constant", 2.0, 0.5, {}};
    out[1].expect = 1;
    out[2].name = "u_profile";
    out[2].U = {"lambda_exp", 1.0, 0.5, {}};
    out[2].V = {"constant", 1.0, 0.5, {}};
    out[2].expect = 1;
    out[3].name = "uv_poly";
    out[3].U = {"poly", 1.0, 0.5, {1.0, 0.0, 1.0}};
    out[3].V = {"poly", 1.0, 0.5, {1.0, 0.0, 1.0}};
    out[3].expect = 0;
    return out;
}

void ReportBundle::require_below(const std::string& name, double value, double bound) {
    verdicts.push_back({name, value <= bound, value, bound, "<="});
}

void ReportBundle::require_above(const std::string& name, double value, double bound) {
    verdicts.push_back({name, value > bound, value, bound, ">"});
}

bool ReportBundle::all_pass() const {
    for (const Verdict& v : verdicts)
        if (!v.pass) return false;
    return true;
}

Json ReportBundle::to_json(const RunConfig& cfg) const {
    Json j;
    j["sections"] = sections;
    Json vs = Json::array();
    for (const Verdict& v : verdicts) {
        vs.push_back({{"name", v.name},
                      {"pass", v.pass},
                      {"value", v.value},
                      {"bound", v.bound},
                      {"direction", v.direction}});
    }
    j["verdicts"] = vs;
    j["pass"] = all_pass();
    char hex[20];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    j["provenance"] = {{"config_hash", hex}, {"seed", cfg.seed}};
    return j;
}

Json reducer_json(const MaxAbs& r, const GridChart& chart) {
    Json j;
    if (r.where == static_cast<std::size_t>(-1)) {
        j["max"] = nullptr;
        return j;
    }
    j["max"] = r.value;
    j["at"] = node_label(chart, r.where);
    return j;
}

Json reducer_json(const MinVal& r, const GridChart& chart) {
    Json j;
    if (!r.seen) {
        j["min"] = nullptr;
        return j;
    }
    j["min"] = r.value;
    j["at"] = node_label(chart, r.where);
    return j;
}

} // namespace conedef
