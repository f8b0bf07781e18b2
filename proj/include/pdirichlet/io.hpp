#pragma once

// Persistence formats and the run configuration shared by the CLI and the Python module.

#include "pdirichlet/continuum.hpp"
#include "pdirichlet/density.hpp"
#include "pdirichlet/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pdirichlet::io {

// ---------------------------------------------------------------------------
// CSV tables

/// A cell is a number or a string. Numbers are written with 17 significant digits; a field
/// that parses completely as a number reads back as one.
using Cell = std::variant<double, std::string>;

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<Cell>> rows;

    std::size_t columns() const { return header.size(); }
    /// Column index by name; parse error when absent.
    std::size_t column(std::string_view name) const;
    double number(std::size_t row, std::string_view name) const;
    std::string text(std::size_t row, std::string_view name) const;

    /// Every row has header.size() cells.
    void validate() const;
    friend bool operator==(const Table&, const Table&) = default;
};

std::string format_number(double v);

void write_csv(const Table& table, std::ostream& out);
void write_csv(const Table& table, const std::filesystem::path& path);
Table read_csv(std::istream& in);
Table read_csv(const std::filesystem::path& path);

/// Sample points as `x,y`.
Table samples_table(const Points& points);
Points points_from_table(const Table& table);

/// Converged continuum fields as `patch,x,y,u`.
Table field_table(const continuum::PatchedDomain& domain, const Eigen::VectorXd& u);

/// Graph labellings as `i,x,y,f` and edge lists as `i,j,w`.
Table labeling_table(const Points& points, const Eigen::VectorXd& f);
Table edge_table(const graph::WeightedGraph& graph);

/// Values on a uniform mesh as `x,y,<names...>`, x varying fastest.
Table mesh_table(std::span<const double> xs, std::span<const double> ys,
                 const std::vector<std::pair<std::string, Eigen::MatrixXd>>& fields);

// ---------------------------------------------------------------------------
// key=value configuration

/// Flat `key = value` lines with `#` comments, in file order.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues read_key_values(std::istream& in);
KeyValues read_key_values(const std::filesystem::path& path);

enum class Subcommand { Sample, Density, SolveDiscrete, SolveContinuum, StudyDensity, StudyMinimizers };

Subcommand parse_subcommand(std::string_view name);
std::string_view to_string(Subcommand command);

enum class GraphKind { Epsilon, Knn };

struct RunConfig {
    Subcommand command = Subcommand::SolveContinuum;
    density::ReferenceId density = density::ReferenceId::Rho1;
    /// exact, kde or skde: the density handed to the continuum solver.
    density::DensityKind estimator = density::DensityKind::Exact;
    std::size_t n = 1u << 14;
    double h = 0.01;
    std::size_t T = 1u << 12;
    double lambda = 1e-6;
    double p = 3.0;
    GraphKind graph = GraphKind::Epsilon;
    /// eps-graph length scale; the midpoint of the admissible range when unset.
    std::optional<double> eps;
    std::size_t k = 10;
    std::string eta = "indicator";
    double beta = 0.01;
    double tol = 1e-5;
    std::size_t max_iter = 200000;
    bool nesterov = false;
    continuum::Scheme scheme = continuum::Scheme::Weak;
    std::vector<std::uint64_t> seeds{1};
    std::size_t points_per_patch = 100;
    /// Side of the uniform evaluation mesh.
    std::size_t mesh = 512;
    std::vector<std::size_t> n_values;
    std::vector<double> h_values;
    std::optional<double> h_exponent;
    bool derivatives = true;
    bool discrete = false;
    std::filesystem::path out = "out";
    bool svg = false;

    /// Checks every value against the preconditions of the module that consumes it.
    void validate() const;
};

/// Applies the pairs in order over the defaults and validates. Unknown keys, malformed values
/// and out-of-range values raise parse errors naming the key.
RunConfig parse_config(const KeyValues& values, RunConfig base = {});

/// Every key with its current value, in canonical order; parse_config inverts it.
KeyValues to_key_values(const RunConfig& config);
std::vector<std::string> config_keys();

bool operator==(const RunConfig& a, const RunConfig& b);

// ---------------------------------------------------------------------------
// Manifest

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

/// Hash of the canonical key=value serialisation.
std::uint64_t config_hash(const RunConfig& config);

/// Text file listing the config hash, library version, seeds, every config value and any
/// extra metadata lines.
void write_manifest(const RunConfig& config, const std::filesystem::path& path, const KeyValues& extra = {});

// ---------------------------------------------------------------------------
// Running a subcommand

struct RunSummary {
    std::vector<std::string> lines;        // one per stage: metric and time
    std::vector<std::filesystem::path> artifacts;
    bool converged = true;
};

/// Runs the pipeline of config.command, writing CSV artifacts and a manifest under config.out.
RunSummary run(const RunConfig& config, std::ostream& log);

}  // namespace pdirichlet::io
