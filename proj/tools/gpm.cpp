// Command-line front end: generate instances, solve matching and
// transportation problems, verify solutions, benchmark, and plot.

#include <chrono>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "gpm/bcp.hpp"
#include "gpm/cost_scaling.hpp"
#include "gpm/hungarian.hpp"
#include "gpm/io.hpp"
#include "gpm/transport.hpp"

namespace {

using namespace gpm;

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty() || out_path == "-")
        std::cout << text;
    else
        io::write_file(out_path, text);
}

std::string record_line(const io::ResultRecord& rec) {
    std::ostringstream os;
    os << "RESULT " << io::to_csv(rec);
    return os.str();
}

int cmd_gen(const io::GenConfig& cfg, const std::string& kind, const std::string& out,
            io::Format fmt) {
    io::GenConfig c = cfg;
    if (kind == "uniform")
        c.kind = io::GenKind::Uniform;
    else if (kind == "clustered")
        c.kind = io::GenKind::Clustered;
    else if (kind == "grid")
        c.kind = io::GenKind::Grid;
    else
        throw CLI::ValidationError("--kind must be uniform, clustered, or grid");
    emit(io::serialize(io::generate(c), fmt), out);
    return 0;
}

int cmd_match_exact(const std::string& in, int k, const std::string& out) {
    const io::InstanceFile inst = io::load_instance(in);
    const int r = static_cast<int>(inst.a.size());
    const int n = static_cast<int>(inst.b.size());
    if (k < 1 || k > std::min(r, n)) {
        std::cerr << "infeasible k\n";
        return 2;
    }
    const uint64_t ops0 = bcp_op_count();
    const double t0 = now_ms();
    ExactMatcher solver(inst.a, inst.b, inst.params());
    const Matching m = solver.solve(k);
    const double t1 = now_ms();
    emit(io::serialize(io::to_solution(m)), out);
    io::ResultRecord rec{"match-exact", in,         n,
                         r,             k,          0.0,
                         m.cost,        0,          solver.stats().searches,
                         solver.stats().relaxations, static_cast<long long>(bcp_op_count() - ops0),
                         t1 - t0};
    std::cerr << record_line(rec) << '\n';
    return 0;
}

int cmd_match_approx(const std::string& in, int k, double eps, const std::string& out) {
    const io::InstanceFile inst = io::load_instance(in);
    const int r = static_cast<int>(inst.a.size());
    const int n = static_cast<int>(inst.b.size());
    if (k < 1 || k > std::min(r, n)) {
        std::cerr << "infeasible k\n";
        return 2;
    }
    const uint64_t ops0 = bcp_op_count();
    const double t0 = now_ms();
    ApproxMatcher::Options opt;
    opt.epsilon = eps;
    ApproxMatcher solver(inst.a, inst.b, k, inst.params(), opt);
    const Matching m = solver.solve();
    const double t1 = now_ms();
    emit(io::serialize(io::to_solution(m)), out);
    io::ResultRecord rec{"match-approx",
                         in,
                         n,
                         r,
                         k,
                         eps,
                         m.cost,
                         solver.stats().scales,
                         solver.stats().refine_iterations,
                         solver.stats().relaxations,
                         static_cast<long long>(bcp_op_count() - ops0),
                         t1 - t0};
    std::cerr << record_line(rec) << '\n';
    return 0;
}

int cmd_transport(const std::string& in, const std::string& out) {
    const io::InstanceFile inst = io::load_instance(in);
    if (!inst.transport_mode()) {
        std::cerr << "transport requires an instance with supplies and demands\n";
        return 2;
    }
    const uint64_t ops0 = bcp_op_count();
    const double t0 = now_ms();
    const TransportResult res =
        solve_transport(inst.a, inst.b, inst.supply, inst.demand, inst.params());
    const double t1 = now_ms();
    emit(io::serialize(io::to_solution(res.plan)), out);
    io::ResultRecord rec{"transport-" + res.stats.solver,
                         in,
                         static_cast<int>(inst.b.size()),
                         static_cast<int>(inst.a.size()),
                         0,
                         0.0,
                         res.plan.cost,
                         res.stats.scales,
                         res.stats.augmentations,
                         res.stats.relaxations,
                         static_cast<long long>(bcp_op_count() - ops0),
                         t1 - t0};
    std::cerr << record_line(rec) << '\n';
    return 0;
}

int cmd_verify(const std::string& in, const std::string& sol_path, std::optional<double> eps) {
    const io::InstanceFile inst = io::load_instance(in);
    const io::SolutionFile sol = io::load_solution(sol_path);
    const int k = static_cast<int>(sol.entries.size());
    const io::VerifyReport rep = io::verify(inst, sol, inst.transport_mode() ? 0 : k, eps);
    for (const std::string& line : rep.checks) std::cout << line << '\n';
    std::cout << (rep.pass ? "PASS" : "FAIL") << '\n';
    return rep.pass ? 0 : 1;
}

int cmd_plot(const std::string& in, const std::string& sol_path, const std::string& out) {
    const io::InstanceFile inst = io::load_instance(in);
    const io::SolutionFile sol = io::load_solution(sol_path);
    emit(io::render_svg(inst, sol), out);
    return 0;
}

int cmd_bench(const std::string& solvers, const std::string& sizes, const std::string& ks,
              const std::string& epss, int reps, uint64_t seed, long long supply_bound,
              int p, int q, const std::string& out) {
    auto split = [](const std::string& s) {
        std::vector<std::string> parts;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) parts.push_back(item);
        return parts;
    };
    std::ostringstream csv;
    csv << io::csv_header() << '\n';
    for (const std::string& solver : split(solvers)) {
        for (const std::string& size_s : split(sizes)) {
            const int n = std::stoi(size_s);
            for (int rep = 0; rep < reps; ++rep) {
                io::GenConfig cfg;
                cfg.kind = io::GenKind::Uniform;
                cfg.p = p;
                cfg.q = q;
                cfg.seed = seed + 1000003ULL * rep + 17ULL * n;
                std::ostringstream name;
                name << "uniform-" << n << "-s" << cfg.seed;
                if (solver == "transport") {
                    cfg.r = std::max(1, static_cast<int>(std::sqrt(n)) / 2);
                    cfg.n = n;
                    cfg.supply_bound = supply_bound > 0 ? supply_bound : 8;
                    const io::InstanceFile inst = io::generate(cfg);
                    const uint64_t ops0 = bcp_op_count();
                    const double t0 = now_ms();
                    const TransportResult res = solve_transport(inst.a, inst.b, inst.supply,
                                                                inst.demand, inst.params());
                    const double t1 = now_ms();
                    csv << io::to_csv(io::ResultRecord{
                               "transport-" + res.stats.solver, name.str(), n, cfg.r, 0, 0.0,
                               res.plan.cost, res.stats.scales, res.stats.augmentations,
                               res.stats.relaxations,
                               static_cast<long long>(bcp_op_count() - ops0), t1 - t0})
                        << '\n';
                    continue;
                }
                cfg.r = n;
                cfg.n = n;
                const io::InstanceFile inst = io::generate(cfg);
                for (const std::string& k_s : split(ks)) {
                    const int k = std::min(std::stoi(k_s), n);
                    if (solver == "exact") {
                        const uint64_t ops0 = bcp_op_count();
                        const double t0 = now_ms();
                        ExactMatcher m(inst.a, inst.b, inst.params());
                        const Matching sol = m.solve(k);
                        const double t1 = now_ms();
                        csv << io::to_csv(io::ResultRecord{
                                   "match-exact", name.str(), n, n, k, 0.0, sol.cost, 0,
                                   m.stats().searches, m.stats().relaxations,
                                   static_cast<long long>(bcp_op_count() - ops0), t1 - t0})
                            << '\n';
                    } else if (solver == "approx") {
                        for (const std::string& eps_s : split(epss)) {
                            const double eps = std::stod(eps_s);
                            const uint64_t ops0 = bcp_op_count();
                            const double t0 = now_ms();
                            ApproxMatcher::Options opt;
                            opt.epsilon = eps;
                            ApproxMatcher m(inst.a, inst.b, k, inst.params(), opt);
                            const Matching sol = m.solve();
                            const double t1 = now_ms();
                            csv << io::to_csv(io::ResultRecord{
                                       "match-approx", name.str(), n, n, k, eps, sol.cost,
                                       m.stats().scales, m.stats().refine_iterations,
                                       m.stats().relaxations,
                                       static_cast<long long>(bcp_op_count() - ops0), t1 - t0})
                                << '\n';
                        }
                    } else {
                        throw CLI::ValidationError("unknown solver '" + solver + "'");
                    }
                }
            }
        }
    }
    emit(csv.str(), out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"geometric partial matching and planar transportation solver"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string out = "-";
    std::string format = "text";
    app.add_option("--out", out, "output path ('-' for stdout)")->capture_default_str();
    app.add_option("--format", format, "instance output format: text|structured")
        ->check(CLI::IsMember({"text", "structured"}))
        ->capture_default_str();

    // gen
    auto* gen = app.add_subcommand("gen", "generate an instance");
    std::string kind = "uniform";
    io::GenConfig cfg;
    long long supply_bound = 0;
    gen->add_option("--kind", kind, "uniform|clustered|grid")->capture_default_str();
    gen->add_option("--r", cfg.r, "size of A")->capture_default_str();
    gen->add_option("--n", cfg.n, "size of B")->capture_default_str();
    gen->add_option("--seed", cfg.seed, "rng seed")->capture_default_str();
    gen->add_option("--p", cfg.p, "norm exponent")->capture_default_str();
    gen->add_option("--q", cfg.q, "cost power")->capture_default_str();
    gen->add_option("--U", supply_bound, "supply bound; > 0 switches to transport mode")
        ->capture_default_str();

    // match-exact
    auto* mex = app.add_subcommand("match-exact", "exact minimum-cost size-k matching");
    std::string in_path;
    int k = 1;
    mex->add_option("instance", in_path, "instance file")->required();
    mex->add_option("--k", k, "matching size")->required();

    // match-approx
    auto* map = app.add_subcommand("match-approx", "(1+eps)-approximate size-k matching");
    std::string in_path2;
    int k2 = 1;
    double eps = 0.1;
    map->add_option("instance", in_path2, "instance file")->required();
    map->add_option("--k", k2, "matching size")->required();
    map->add_option("--eps", eps, "approximation parameter")->capture_default_str();

    // transport
    auto* tr = app.add_subcommand("transport", "exact transportation plan");
    std::string in_path3;
    tr->add_option("instance", in_path3, "instance file")->required();

    // verify
    auto* ver = app.add_subcommand("verify", "verify a solution against its instance");
    std::string in_path4, sol_path;
    double ver_eps = -1.0;
    ver->add_option("instance", in_path4, "instance file")->required();
    ver->add_option("solution", sol_path, "solution file")->required();
    ver->add_option("--eps", ver_eps, "check the (1+eps) bound instead of exact optimality");

    // bench
    auto* bench = app.add_subcommand("bench", "benchmark harness; writes CSV");
    std::string b_solvers = "exact,approx";
    std::string b_sizes = "100,200";
    std::string b_ks = "16";
    std::string b_eps = "0.1";
    int b_reps = 3;
    uint64_t b_seed = 1;
    int b_p = 2, b_q = 1;
    long long b_supply = 0;
    bench->add_option("--solvers", b_solvers, "comma list: exact,approx,transport")
        ->capture_default_str();
    bench->add_option("--sizes", b_sizes, "comma list of n values")->capture_default_str();
    bench->add_option("--k-grid", b_ks, "comma list of k values")->capture_default_str();
    bench->add_option("--eps-grid", b_eps, "comma list of eps values")->capture_default_str();
    bench->add_option("--reps", b_reps, "repetitions per configuration")->capture_default_str();
    bench->add_option("--seed", b_seed, "base seed")->capture_default_str();
    bench->add_option("--p", b_p, "norm exponent")->capture_default_str();
    bench->add_option("--q", b_q, "cost power")->capture_default_str();
    bench->add_option("--U", b_supply, "supply bound for transport runs")->capture_default_str();

    // plot
    auto* plot = app.add_subcommand("plot", "render an instance + solution as SVG");
    std::string in_path5, sol_path2;
    plot->add_option("instance", in_path5, "instance file")->required();
    plot->add_option("solution", sol_path2, "solution file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const io::Format fmt = format == "structured" ? io::Format::Structured : io::Format::Text;
        if (gen->parsed()) {
            cfg.supply_bound = supply_bound;
            return cmd_gen(cfg, kind, out, fmt);
        }
        if (mex->parsed()) return cmd_match_exact(in_path, k, out);
        if (map->parsed()) return cmd_match_approx(in_path2, k2, eps, out);
        if (tr->parsed()) return cmd_transport(in_path3, out);
        if (ver->parsed())
            return cmd_verify(in_path4, sol_path,
                              ver_eps >= 0 ? std::optional<double>(ver_eps) : std::nullopt);
        if (bench->parsed())
            return cmd_bench(b_solvers, b_sizes, b_ks, b_eps, b_reps, b_seed, b_supply, b_p, b_q,
                             out);
        if (plot->parsed()) return cmd_plot(in_path5, sol_path2, out);
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
