#include "pdirichlet/io.hpp"

#include "pdirichlet/error.hpp"
#include "pdirichlet/spline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace pdirichlet::io {

namespace {

std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

bool needs_quotes(const std::string& s) {
    return s.find_first_of(",\"\n\r") != std::string::npos || parse_double(s).has_value() || s.empty();
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

// Splits one CSV record; quoted fields may contain separators, quotes and newlines.
bool read_record(std::istream& in, std::vector<std::pair<std::string, bool>>& fields) {
    fields.clear();
    if (in.peek() == std::char_traits<char>::eof()) return false;
    std::string cur;
    bool quoted = false, in_quotes = false, any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    cur += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                cur += c;
            }
            continue;
        }
        if (c == '"' && cur.empty() && !quoted) {
            quoted = in_quotes = true;
        } else if (c == ',') {
            fields.emplace_back(cur, quoted);
            cur.clear();
            quoted = false;
        } else if (c == '\n') {
            break;
        } else if (c == '\r' && in.peek() == '\n') {
            continue;
        } else {
            if (quoted) fail(ErrorCode::Parse, "malformed CSV: text after closing quote");
            cur += c;
        }
    }
    if (in_quotes) fail(ErrorCode::Parse, "malformed CSV: unterminated quote");
    if (!any) return false;
    fields.emplace_back(cur, quoted);
    return true;
}

[[noreturn]] void bad_key(const std::string& key, const std::string& what) {
    fail(ErrorCode::Parse, key + ": " + what);
}

double to_number(const std::string& key, const std::string& v) {
    auto d = parse_double(v);
    if (!d || !std::isfinite(*d)) bad_key(key, "expected a number, got '" + v + "'");
    return *d;
}

// Non-negative integer, also written as b^e.
std::size_t to_count(const std::string& key, const std::string& v) {
    auto caret = v.find('^');
    if (caret != std::string::npos) {
        std::size_t b = to_count(key, v.substr(0, caret)), e = to_count(key, v.substr(caret + 1));
        double r = std::pow(static_cast<double>(b), static_cast<double>(e));
        if (!(r < 9e15)) bad_key(key, "value too large");
        return static_cast<std::size_t>(r);
    }
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
        bad_key(key, "expected a non-negative integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    std::string s = v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    bad_key(key, "expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F&& f) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + f(v[k]);
    return out;
}

std::string count_text(std::size_t v) { return std::to_string(v); }

bool uses_continuum(Subcommand c) {
    return c == Subcommand::SolveContinuum || c == Subcommand::StudyMinimizers;
}

density::DensityKind parse_estimator(const std::string& key, const std::string& v) {
    if (v == "exact") return density::DensityKind::Exact;
    if (v == "kde") return density::DensityKind::Kde;
    if (v == "skde") return density::DensityKind::Skde;
    bad_key(key, "expected exact, kde or skde, got '" + v + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Tables

std::size_t Table::column(std::string_view name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorCode::Parse, "missing column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
}

double Table::number(std::size_t row, std::string_view name) const {
    const Cell& c = rows.at(row).at(column(name));
    if (const double* d = std::get_if<double>(&c)) return *d;
    fail(ErrorCode::Parse, "column '" + std::string(name) + "' holds text where a number is expected");
}

std::string Table::text(std::size_t row, std::string_view name) const {
    const Cell& c = rows.at(row).at(column(name));
    if (const std::string* s = std::get_if<std::string>(&c)) return *s;
    return format_number(std::get<double>(c));
}

void Table::validate() const {
    if (header.empty()) fail(ErrorCode::Shape, "table has no columns");
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != header.size()) {
            std::ostringstream msg;
            msg << "row " << r << " has " << rows[r].size() << " cells, header has " << header.size();
            fail(ErrorCode::Shape, msg.str());
        }
    }
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_csv(const Table& table, std::ostream& out) {
    table.validate();
    for (std::size_t k = 0; k < table.header.size(); ++k) {
        const std::string& h = table.header[k];
        out << (k ? "," : "") << (h.find_first_of(",\"\n\r") != std::string::npos ? quote(h) : h);
    }
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k) out << ',';
            if (const double* d = std::get_if<double>(&row[k])) {
                out << format_number(*d);
            } else {
                const auto& s = std::get<std::string>(row[k]);
                out << (needs_quotes(s) ? quote(s) : s);
            }
        }
        out << '\n';
    }
    if (!out) fail(ErrorCode::Io, "failed to write CSV");
}

void write_csv(const Table& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
    write_csv(table, out);
}

Table read_csv(std::istream& in) {
    Table t;
    std::vector<std::pair<std::string, bool>> fields;
    if (!read_record(in, fields)) fail(ErrorCode::Parse, "CSV has no header line");
    for (auto& [f, q] : fields) t.header.push_back(f);
    while (read_record(in, fields)) {
        if (fields.size() != t.header.size()) {
            std::ostringstream msg;
            msg << "malformed CSV: line " << t.rows.size() + 2 << " has " << fields.size() << " fields, expected "
                << t.header.size();
            fail(ErrorCode::Parse, msg.str());
        }
        std::vector<Cell> row;
        row.reserve(fields.size());
        for (auto& [f, q] : fields) {
            std::optional<double> d = q ? std::nullopt : parse_double(f);
            if (d) row.emplace_back(*d);
            else row.emplace_back(f);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
    return read_csv(in);
}

Table samples_table(const Points& points) {
    Table t{{"x", "y"}, {}};
    t.rows.reserve(points.size());
    for (const auto& p : points) t.rows.push_back({p.x, p.y});
    return t;
}

Points points_from_table(const Table& table) {
    std::size_t cx = table.column("x"), cy = table.column("y");
    Points out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const double* x = std::get_if<double>(&table.rows[r][cx]);
        const double* y = std::get_if<double>(&table.rows[r][cy]);
        if (!x || !y) fail(ErrorCode::Parse, "non-numeric coordinate in row " + std::to_string(r));
        out.push_back({*x, *y});
    }
    return out;
}

Table field_table(const continuum::PatchedDomain& domain, const Eigen::VectorXd& u) {
    if (static_cast<std::size_t>(u.size()) != domain.size()) fail(ErrorCode::Shape, "field size does not match domain");
    Table t{{"patch", "x", "y", "u"}, {}};
    for (std::size_t k = 0; k < domain.size(); ++k) {
        const auto& node = domain.nodes()[k];
        t.rows.push_back({static_cast<double>(node.patch), node.position.x, node.position.y,
                          u[static_cast<Eigen::Index>(k)]});
    }
    return t;
}

Table labeling_table(const Points& points, const Eigen::VectorXd& f) {
    if (static_cast<std::size_t>(f.size()) != points.size()) fail(ErrorCode::Shape, "labelling size mismatch");
    Table t{{"i", "x", "y", "f"}, {}};
    for (std::size_t i = 0; i < points.size(); ++i)
        t.rows.push_back({static_cast<double>(i), points[i].x, points[i].y, f[static_cast<Eigen::Index>(i)]});
    return t;
}

Table edge_table(const graph::WeightedGraph& graph) {
    Table t{{"i", "j", "w"}, {}};
    for (const auto& e : graph.edges()) t.rows.push_back({static_cast<double>(e.i), static_cast<double>(e.j), e.w});
    return t;
}

Table mesh_table(std::span<const double> xs, std::span<const double> ys,
                 const std::vector<std::pair<std::string, Eigen::MatrixXd>>& fields) {
    Table t{{"x", "y"}, {}};
    for (const auto& [name, m] : fields) {
        if (static_cast<std::size_t>(m.rows()) != xs.size() || static_cast<std::size_t>(m.cols()) != ys.size())
            fail(ErrorCode::Shape, "mesh field '" + name + "' has the wrong shape");
        t.header.push_back(name);
    }
    for (std::size_t j = 0; j < ys.size(); ++j) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            std::vector<Cell> row{xs[i], ys[j]};
            for (const auto& f : fields)
                row.emplace_back(f.second(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            t.rows.push_back(std::move(row));
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// key=value

KeyValues read_key_values(std::istream& in) {
    KeyValues out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::Parse, "line " + std::to_string(number) + ": expected key = value");
        std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
        if (key.empty()) fail(ErrorCode::Parse, "line " + std::to_string(number) + ": empty key");
        out.emplace_back(key, value);
    }
    return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open config '" + path.string() + "'");
    return read_key_values(in);
}

Subcommand parse_subcommand(std::string_view name) {
    if (name == "sample") return Subcommand::Sample;
    if (name == "density") return Subcommand::Density;
    if (name == "solve-discrete") return Subcommand::SolveDiscrete;
    if (name == "solve-continuum") return Subcommand::SolveContinuum;
    if (name == "study-density") return Subcommand::StudyDensity;
    if (name == "study-minimizers") return Subcommand::StudyMinimizers;
    fail(ErrorCode::Parse, "command: unknown subcommand '" + std::string(name) + "'");
}

std::string_view to_string(Subcommand command) {
    switch (command) {
        case Subcommand::Sample: return "sample";
        case Subcommand::Density: return "density";
        case Subcommand::SolveDiscrete: return "solve-discrete";
        case Subcommand::SolveContinuum: return "solve-continuum";
        case Subcommand::StudyDensity: return "study-density";
        case Subcommand::StudyMinimizers: return "study-minimizers";
    }
    return "unknown";
}

void RunConfig::validate() const {
    if (n < 1) bad_key("n", "must be at least 1");
    if (!(h > 0.0)) bad_key("h", "must be positive");
    {
        auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(T))));
        if (s * s != T || s < 3) bad_key("T", "must be a perfect square of at least 9");
    }
    if (!(lambda > 0.0)) bad_key("lambda", "must be positive");
    if (!(p > 1.0)) bad_key("p", "p > 1 required");
    if (uses_continuum(command) && !(p > 2.0)) bad_key("p", "p > d = 2 required for the continuum solver");
    if (eps && !(*eps > 0.0)) bad_key("eps", "must be positive");
    if (k < 1) bad_key("k", "must be at least 1");
    try {
        density::parse_profile(eta);
    } catch (const Error&) {
        bad_key("eta", "expected indicator, gaussian or epanechnikov");
    }
    if (!(beta >= 0.0)) bad_key("beta", "must be non-negative");
    if (!(tol > 0.0)) bad_key("tol", "must be positive");
    if (max_iter < 1) bad_key("max_iter", "must be at least 1");
    if (seeds.empty()) bad_key("seeds", "at least one seed is required");
    if (points_per_patch < 3) bad_key("points_per_patch", "must be at least 3");
    if (mesh < 2) bad_key("mesh", "must be at least 2");
    for (std::size_t v : n_values)
        if (v < 1) bad_key("n_values", "entries must be at least 1");
    for (double v : h_values)
        if (!(v > 0.0)) bad_key("h_values", "entries must be positive");
    if (h_exponent && !(*h_exponent > 0.0)) bad_key("h_exponent", "must be positive");
    if (out.empty()) bad_key("out", "must not be empty");
}

std::vector<std::string> config_keys() {
    return {"command", "density", "estimator", "n",        "h",      "T",          "lambda", "p",
            "graph",   "eps",     "k",         "eta",      "beta",   "tol",        "max_iter", "nesterov",
            "scheme",  "seeds",   "points_per_patch", "mesh", "n_values", "h_values", "h_exponent",
            "derivatives", "discrete", "out", "svg"};
}

RunConfig parse_config(const KeyValues& values, RunConfig c) {
    for (const auto& [key, v] : values) {
        if (key == "command") c.command = parse_subcommand(v);
        else if (key == "density") {
            try {
                c.density = density::parse_reference_id(v);
            } catch (const Error&) {
                bad_key(key, "expected rho1, rho2 or rho3, got '" + v + "'");
            }
        } else if (key == "estimator") c.estimator = parse_estimator(key, v);
        else if (key == "n") c.n = to_count(key, v);
        else if (key == "h") c.h = to_number(key, v);
        else if (key == "T") c.T = to_count(key, v);
        else if (key == "lambda") c.lambda = to_number(key, v);
        else if (key == "p") c.p = to_number(key, v);
        else if (key == "graph") {
            if (v == "epsilon") c.graph = GraphKind::Epsilon;
            else if (v == "knn") c.graph = GraphKind::Knn;
            else bad_key(key, "expected epsilon or knn, got '" + v + "'");
        } else if (key == "eps") {
            if (v == "auto" || v.empty()) c.eps.reset();
            else c.eps = to_number(key, v);
        } else if (key == "k") c.k = to_count(key, v);
        else if (key == "eta") c.eta = v;
        else if (key == "beta") c.beta = to_number(key, v);
        else if (key == "tol") c.tol = to_number(key, v);
        else if (key == "max_iter") c.max_iter = to_count(key, v);
        else if (key == "nesterov") c.nesterov = to_bool(key, v);
        else if (key == "scheme") {
            if (v == "weak") c.scheme = continuum::Scheme::Weak;
            else if (v == "collocation") c.scheme = continuum::Scheme::Collocation;
            else bad_key(key, "expected weak or collocation, got '" + v + "'");
        } else if (key == "seeds" || key == "seed") {
            c.seeds.clear();
            for (const auto& s : split_list(v)) c.seeds.push_back(to_count(key, s));
        } else if (key == "points_per_patch") c.points_per_patch = to_count(key, v);
        else if (key == "mesh") c.mesh = to_count(key, v);
        else if (key == "n_values") {
            c.n_values.clear();
            for (const auto& s : split_list(v)) c.n_values.push_back(to_count(key, s));
        } else if (key == "h_values") {
            c.h_values.clear();
            for (const auto& s : split_list(v)) c.h_values.push_back(to_number(key, s));
        } else if (key == "h_exponent") {
            if (v == "none" || v.empty()) c.h_exponent.reset();
            else c.h_exponent = to_number(key, v);
        } else if (key == "derivatives") c.derivatives = to_bool(key, v);
        else if (key == "discrete") c.discrete = to_bool(key, v);
        else if (key == "out") c.out = v;
        else if (key == "svg") c.svg = to_bool(key, v);
        else bad_key(key, "unknown key");
    }
    c.validate();
    return c;
}

KeyValues to_key_values(const RunConfig& c) {
    auto num = [](double v) { return format_number(v); };
    return {
        {"command", std::string(to_string(c.command))},
        {"density", std::string(density::to_string(c.density))},
        {"estimator", std::string(density::to_string(c.estimator))},
        {"n", count_text(c.n)},
        {"h", num(c.h)},
        {"T", count_text(c.T)},
        {"lambda", num(c.lambda)},
        {"p", num(c.p)},
        {"graph", c.graph == GraphKind::Epsilon ? "epsilon" : "knn"},
        {"eps", c.eps ? num(*c.eps) : "auto"},
        {"k", count_text(c.k)},
        {"eta", c.eta},
        {"beta", num(c.beta)},
        {"tol", num(c.tol)},
        {"max_iter", count_text(c.max_iter)},
        {"nesterov", c.nesterov ? "true" : "false"},
        {"scheme", c.scheme == continuum::Scheme::Weak ? "weak" : "collocation"},
        {"seeds", join(c.seeds, [](std::uint64_t s) { return std::to_string(s); })},
        {"points_per_patch", count_text(c.points_per_patch)},
        {"mesh", count_text(c.mesh)},
        {"n_values", join(c.n_values, count_text)},
        {"h_values", join(c.h_values, num)},
        {"h_exponent", c.h_exponent ? num(*c.h_exponent) : "none"},
        {"derivatives", c.derivatives ? "true" : "false"},
        {"discrete", c.discrete ? "true" : "false"},
        {"out", c.out.string()},
        {"svg", c.svg ? "true" : "false"},
    };
}

bool operator==(const RunConfig& a, const RunConfig& b) { return to_key_values(a) == to_key_values(b); }

// ---------------------------------------------------------------------------
// Manifest

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t config_hash(const RunConfig& config) {
    std::string canonical;
    for (const auto& [k, v] : to_key_values(config)) canonical += k + "=" + v + "\n";
    return fnv1a(canonical);
}

void write_manifest(const RunConfig& config, const std::filesystem::path& path, const KeyValues& extra) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(config)));
    out << "# pdirichlet run manifest\n";
    out << "config_hash = " << hash << "\n";
    out << "version = " << PDIRICHLET_VERSION << "\n";
    out << "seeds = " << join(config.seeds, [](std::uint64_t s) { return std::to_string(s); }) << "\n";
    out << "# configuration (defaults included)\n";
    for (const auto& [k, v] : to_key_values(config)) out << "config." << k << " = " << v << "\n";
    if (!extra.empty()) out << "# metadata\n";
    for (const auto& [k, v] : extra) out << k << " = " << v << "\n";
    if (!out) fail(ErrorCode::Io, "failed to write manifest");
}

}  // namespace pdirichlet::io
