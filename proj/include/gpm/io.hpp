#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gpm/geometry.hpp"
#include "gpm/matching.hpp"
#include "gpm/transport.hpp"

namespace gpm::io {

/// Parsed instance: matching mode (no supplies) or transport mode (supplies
/// on every A record, demands on every B record, balanced).
struct InstanceFile {
    int p = 2;
    int q = 1;
    std::vector<Point> a, b;
    std::vector<long long> supply;  // empty in matching mode
    std::vector<long long> demand;  // negative values, empty in matching mode
    bool transport_mode() const { return !supply.empty(); }
    CostParams params() const { return CostParams{p, q}; }
};

enum class Format { Text, Structured };

std::string serialize(const InstanceFile& inst, Format fmt = Format::Text);
InstanceFile parse(const std::string& text);
InstanceFile load_instance(const std::string& path);
void save_instance(const InstanceFile& inst, const std::string& path, Format fmt = Format::Text);

/// Solution file: PAIR lines plus trailing COST.
struct SolutionFile {
    std::vector<PlanEntry> entries;
    double cost = 0.0;
};

std::string serialize(const SolutionFile& sol);
SolutionFile parse_solution(const std::string& text);
SolutionFile load_solution(const std::string& path);
void save_solution(const SolutionFile& sol, const std::string& path);

SolutionFile to_solution(const Matching& m);
SolutionFile to_solution(const TransportPlan& plan);

// -- generators --------------------------------------------------------------

enum class GenKind { Uniform, Clustered, Grid };

struct GenConfig {
    GenKind kind = GenKind::Uniform;
    int r = 10;
    int n = 10;
    uint64_t seed = 1;
    int p = 2;
    int q = 1;
    long long supply_bound = 0;  // > 0 switches to transport mode
};

InstanceFile generate(const GenConfig& cfg);

// -- verification -------------------------------------------------------------

struct VerifyReport {
    bool pass = true;
    std::vector<std::string> checks;  // "ok: ..." / "FAIL: ..." lines
    void ok(const std::string& what);
    void fail(const std::string& what);
};

/// Structural checks, cost recomputation, and (small instances) oracle
/// comparison. eps, when given, checks the (1+eps) bound against the exact
/// solver.
VerifyReport verify(const InstanceFile& inst, const SolutionFile& sol, int k,
                    std::optional<double> eps);

// -- plotting and bench records ----------------------------------------------

/// Static SVG: circles for points, <line> per matching pair, <path> per
/// transport arc with stroke width scaled by flow.
std::string render_svg(const InstanceFile& inst, const SolutionFile& sol);

struct ResultRecord {
    std::string solver;
    std::string instance;
    int n = 0, r = 0, k = 0;
    double eps = 0.0;
    double cost = 0.0;
    long long scales = 0;
    long long iterations = 0;
    long long relaxations = 0;
    long long bcp_ops = 0;
    double millis = 0.0;
};

std::string csv_header();
std::string to_csv(const ResultRecord& rec);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace gpm::io
