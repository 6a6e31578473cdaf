#include "gpm/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gpm/hungarian.hpp"
#include "gpm/oracle.hpp"

namespace gpm::io {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

// ---------------------------------------------------------------------------
// instance format
// ---------------------------------------------------------------------------

std::string serialize(const InstanceFile& inst, Format fmt) {
    if (fmt == Format::Structured) {
        nlohmann::json j;
        j["format"] = "GPM";
        j["version"] = 1;
        j["p"] = inst.p;
        j["q"] = inst.q;
        nlohmann::json ja = nlohmann::json::array(), jb = nlohmann::json::array();
        for (size_t i = 0; i < inst.a.size(); ++i) {
            nlohmann::json rec{{"x", inst.a[i].x}, {"y", inst.a[i].y}};
            if (inst.transport_mode()) rec["supply"] = inst.supply[i];
            ja.push_back(rec);
        }
        for (size_t jj = 0; jj < inst.b.size(); ++jj) {
            nlohmann::json rec{{"x", inst.b[jj].x}, {"y", inst.b[jj].y}};
            if (inst.transport_mode()) rec["demand"] = inst.demand[jj];
            jb.push_back(rec);
        }
        j["a"] = ja;
        j["b"] = jb;
        return j.dump(2) + "\n";
    }
    std::ostringstream out;
    out << "GPM 1 " << inst.p << ' ' << inst.q << ' ' << inst.a.size() << ' ' << inst.b.size()
        << '\n';
    for (size_t i = 0; i < inst.a.size(); ++i) {
        out << "A " << fmt_double(inst.a[i].x) << ' ' << fmt_double(inst.a[i].y);
        if (inst.transport_mode()) out << ' ' << inst.supply[i];
        out << '\n';
    }
    for (size_t j = 0; j < inst.b.size(); ++j) {
        out << "B " << fmt_double(inst.b[j].x) << ' ' << fmt_double(inst.b[j].y);
        if (inst.transport_mode()) out << ' ' << inst.demand[j];
        out << '\n';
    }
    return out.str();
}

namespace {

InstanceFile finish_instance(InstanceFile inst, bool has_supply, bool all_supply) {
    if (has_supply && !all_supply)
        throw std::runtime_error("instance: supplies must appear on all records or none");
    for (size_t i = 0; i < inst.a.size(); ++i) inst.a[i].id = static_cast<int>(i);
    for (size_t j = 0; j < inst.b.size(); ++j) inst.b[j].id = static_cast<int>(j);
    for (const Point& pt : inst.a)
        if (!std::isfinite(pt.x) || !std::isfinite(pt.y))
            throw std::runtime_error("instance: non-finite coordinate");
    for (const Point& pt : inst.b)
        if (!std::isfinite(pt.x) || !std::isfinite(pt.y))
            throw std::runtime_error("instance: non-finite coordinate");
    if (inst.p < 1 || inst.q < 1) throw std::runtime_error("instance: p and q must be >= 1");
    if (inst.transport_mode()) {
        long long total = 0;
        for (long long s : inst.supply) {
            if (s <= 0) throw std::runtime_error("instance: supplies must be positive");
            total += s;
        }
        for (long long d : inst.demand) {
            if (d >= 0) throw std::runtime_error("instance: demands must be negative");
            total += d;
        }
        if (total != 0) throw std::runtime_error("instance: supplies and demands do not balance");
    }
    return inst;
}

InstanceFile parse_structured(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    InstanceFile inst;
    inst.p = j.at("p").get<int>();
    inst.q = j.at("q").get<int>();
    bool has = false, all = true;
    for (const auto& rec : j.at("a")) {
        inst.a.push_back(Point{rec.at("x").get<double>(), rec.at("y").get<double>(), -1});
        if (rec.contains("supply")) {
            inst.supply.push_back(rec["supply"].get<long long>());
            has = true;
        } else {
            all = false;
        }
    }
    for (const auto& rec : j.at("b")) {
        inst.b.push_back(Point{rec.at("x").get<double>(), rec.at("y").get<double>(), -1});
        if (rec.contains("demand")) {
            inst.demand.push_back(rec["demand"].get<long long>());
            has = true;
        } else {
            all = false;
        }
    }
    return finish_instance(std::move(inst), has, has && all);
}

}  // namespace

InstanceFile parse(const std::string& text) {
    // sniff the structured format
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        if (c == '{') return parse_structured(text);
        break;
    }
    std::istringstream in(text);
    std::string magic;
    int version = 0, r = 0, n = 0;
    InstanceFile inst;
    in >> magic >> version >> inst.p >> inst.q >> r >> n;
    if (!in || magic != "GPM" || version != 1)
        throw std::runtime_error("instance: bad header (expected 'GPM 1 p q r n')");
    if (r < 1 || n < 1) throw std::runtime_error("instance: r and n must be >= 1");
    std::string line;
    std::getline(in, line);
    bool has = false, all = true;
    for (int it = 0; it < r + n; ++it) {
        if (!std::getline(in, line)) throw std::runtime_error("instance: truncated file");
        std::istringstream ls(line);
        std::string tag;
        double x, y;
        ls >> tag >> x >> y;
        if (!ls) throw std::runtime_error("instance: bad record '" + line + "'");
        const bool want_a = it < r;
        if ((want_a && tag != "A") || (!want_a && tag != "B"))
            throw std::runtime_error("instance: record out of order: '" + line + "'");
        long long s;
        const bool got_supply = static_cast<bool>(ls >> s);
        if (want_a) {
            inst.a.push_back(Point{x, y, -1});
            if (got_supply) inst.supply.push_back(s);
        } else {
            inst.b.push_back(Point{x, y, -1});
            if (got_supply) inst.demand.push_back(s);
        }
        has = has || got_supply;
        all = all && got_supply;
    }
    return finish_instance(std::move(inst), has, has && all);
}

InstanceFile load_instance(const std::string& path) { return parse(read_file(path)); }

void save_instance(const InstanceFile& inst, const std::string& path, Format fmt) {
    write_file(path, serialize(inst, fmt));
}

// ---------------------------------------------------------------------------
// solution format
// ---------------------------------------------------------------------------

std::string serialize(const SolutionFile& sol) {
    std::ostringstream out;
    for (const auto& e : sol.entries)
        out << "PAIR " << e.a << ' ' << e.b << ' ' << fmt_double(e.flow) << '\n';
    out << "COST " << fmt_double(sol.cost) << '\n';
    return out.str();
}

SolutionFile parse_solution(const std::string& text) {
    SolutionFile sol;
    std::istringstream in(text);
    std::string line;
    bool seen_cost = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "PAIR") {
            PlanEntry e;
            ls >> e.a >> e.b >> e.flow;
            if (!ls) throw std::runtime_error("solution: bad PAIR line '" + line + "'");
            sol.entries.push_back(e);
        } else if (tag == "COST") {
            ls >> sol.cost;
            if (!ls) throw std::runtime_error("solution: bad COST line");
            seen_cost = true;
        } else {
            throw std::runtime_error("solution: unknown tag '" + tag + "'");
        }
    }
    if (!seen_cost) throw std::runtime_error("solution: missing COST line");
    return sol;
}

SolutionFile load_solution(const std::string& path) { return parse_solution(read_file(path)); }

void save_solution(const SolutionFile& sol, const std::string& path) {
    write_file(path, serialize(sol));
}

SolutionFile to_solution(const Matching& m) {
    SolutionFile sol;
    for (const auto& [i, j] : m.pairs) sol.entries.push_back(PlanEntry{i, j, 1.0});
    sol.cost = m.cost;
    return sol;
}

SolutionFile to_solution(const TransportPlan& plan) {
    SolutionFile sol;
    sol.entries = plan.entries;
    sol.cost = plan.cost;
    return sol;
}

// ---------------------------------------------------------------------------
// generators
// ---------------------------------------------------------------------------

namespace {

// uniform double in [0,1) from the top 53 bits; stable across platforms
double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double gauss(std::mt19937_64& rng) {
    // Box-Muller, deterministic
    double u1 = u01(rng), u2 = u01(rng);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace

InstanceFile generate(const GenConfig& cfg) {
    if (cfg.r < 1 || cfg.n < 1) throw std::invalid_argument("gen: r and n must be >= 1");
    InstanceFile inst;
    inst.p = cfg.p;
    inst.q = cfg.q;
    std::mt19937_64 rng(cfg.seed);

    auto gen_points = [&](int count, bool offset_grid) {
        std::vector<Point> pts;
        pts.reserve(count);
        switch (cfg.kind) {
            case GenKind::Uniform:
                for (int i = 0; i < count; ++i) pts.push_back(Point{u01(rng), u01(rng), i});
                break;
            case GenKind::Clustered: {
                const int clusters = static_cast<int>(std::ceil(std::sqrt(cfg.r)));
                std::vector<std::pair<double, double>> centers(clusters);
                std::mt19937_64 crng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
                for (auto& c : centers) c = {u01(crng), u01(crng)};
                for (int i = 0; i < count; ++i) {
                    const auto& c = centers[static_cast<int>(rng() % clusters)];
                    pts.push_back(
                        Point{c.first + 0.05 * gauss(rng), c.second + 0.05 * gauss(rng), i});
                }
                break;
            }
            case GenKind::Grid: {
                const int side =
                    static_cast<int>(std::ceil(std::sqrt(std::max(cfg.r, cfg.n))));
                const double cell = 1.0 / side;
                const double off = offset_grid ? 0.5 * cell : 0.0;
                for (int i = 0; i < count; ++i) {
                    const int gx = i % side, gy = i / side;
                    pts.push_back(Point{(gx + 0.25) * cell + off, (gy + 0.25) * cell + off, i});
                }
                break;
            }
        }
        return pts;
    };

    inst.a = gen_points(cfg.r, false);
    inst.b = gen_points(cfg.n, true);

    if (cfg.supply_bound > 0) {
        const long long u = cfg.supply_bound;
        inst.supply.resize(cfg.r);
        inst.demand.resize(cfg.n);
        long long total = 0;
        for (auto& s : inst.supply) {
            s = 1 + static_cast<long long>(rng() % static_cast<uint64_t>(u));
            total += s;
        }
        // every demand needs at least one unit
        while (total < cfg.n) {
            inst.supply[0] += cfg.n - total;
            total = 0;
            for (long long s : inst.supply) total += s;
        }
        long long rest = total;
        for (int j = 0; j + 1 < cfg.n; ++j) {
            const long long room = rest - (cfg.n - 1 - j);  // keep 1 per later slot
            long long d = 1 + static_cast<long long>(rng() % static_cast<uint64_t>(u));
            d = std::min(d, room);
            inst.demand[j] = -d;
            rest -= d;
        }
        inst.demand[cfg.n - 1] = -rest;  // balanced by adjusting the last demand
    }
    for (size_t i = 0; i < inst.a.size(); ++i) inst.a[i].id = static_cast<int>(i);
    for (size_t j = 0; j < inst.b.size(); ++j) inst.b[j].id = static_cast<int>(j);
    return inst;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

void VerifyReport::ok(const std::string& what) { checks.push_back("ok: " + what); }
void VerifyReport::fail(const std::string& what) {
    checks.push_back("FAIL: " + what);
    pass = false;
}

VerifyReport verify(const InstanceFile& inst, const SolutionFile& sol, int k,
                    std::optional<double> eps) {
    VerifyReport rep;
    const int r = static_cast<int>(inst.a.size());
    const int n = static_cast<int>(inst.b.size());
    const CostParams cp = inst.params();

    // structural validity
    bool structure_ok = true;
    std::vector<int> deg_a(r, 0), deg_b(n, 0);
    for (const auto& e : sol.entries) {
        if (e.a < 0 || e.a >= r || e.b < 0 || e.b >= n) {
            rep.fail("entry references unknown node (" + std::to_string(e.a) + "," +
                     std::to_string(e.b) + ")");
            structure_ok = false;
            continue;
        }
        if (e.flow < 0.0) {
            rep.fail("negative flow on pair");
            structure_ok = false;
        }
        ++deg_a[e.a];
        ++deg_b[e.b];
    }
    if (!structure_ok) return rep;

    if (!inst.transport_mode()) {
        for (int i = 0; i < r; ++i)
            if (deg_a[i] > 1) rep.fail("node A" + std::to_string(i) + " matched twice");
        for (int j = 0; j < n; ++j)
            if (deg_b[j] > 1) rep.fail("node B" + std::to_string(j) + " matched twice");
        if (!rep.pass) return rep;
        rep.ok("matching is structurally valid");
        if (k > 0 && static_cast<int>(sol.entries.size()) != k)
            rep.fail("matching has size " + std::to_string(sol.entries.size()) + ", expected " +
                     std::to_string(k));

        std::vector<std::pair<int, int>> pairs;
        for (const auto& e : sol.entries) pairs.emplace_back(e.a, e.b);
        const double recomputed = canonical_cost(pairs, inst.a, inst.b, cp);
        if (recomputed == sol.cost)
            rep.ok("cost matches recomputation exactly");
        else if (std::fabs(recomputed - sol.cost) <=
                 1e-12 * std::max(1.0, std::fabs(recomputed)))
            rep.ok("cost matches recomputation within 1e-12 relative");
        else
            rep.fail("cost mismatch: file says " + fmt_double(sol.cost) + ", recomputed " +
                     fmt_double(recomputed));
        if (!rep.pass) return rep;

        const int kk = static_cast<int>(sol.entries.size());
        if (eps) {
            if (r <= 60 && n <= 60 && kk >= 1) {
                const Matching exact = solve_exact(inst.a, inst.b, kk, cp);
                const double bound = (1.0 + *eps) * exact.cost + 1e-9 * exact.cost;
                if (recomputed <= bound)
                    rep.ok("within the (1+eps) bound of the exact optimum " +
                           fmt_double(exact.cost));
                else
                    rep.fail("cost " + fmt_double(recomputed) + " exceeds (1+eps) * OPT = " +
                             fmt_double(bound) + " (OPT " + fmt_double(exact.cost) + ")");
            } else {
                rep.ok("instance too large for the exact-bound check; skipped");
            }
        } else if (r <= 9 && n <= 9 && kk >= 1) {
            const auto dense = oracle::make_dense(inst.a, inst.b, cp);
            const Matching best = oracle::brute_force_matching(dense, kk);
            if (recomputed == best.cost)
                rep.ok("matches the brute-force optimum exactly");
            else
                rep.fail("cost " + fmt_double(recomputed) + " differs from brute-force optimum " +
                         fmt_double(best.cost));
        } else if (r <= 60 && n <= 60 && kk >= 1) {
            const auto dense = oracle::make_dense(inst.a, inst.b, cp);
            const Matching best = oracle::ssp_matching(dense, kk);
            if (std::fabs(recomputed - best.cost) <= 1e-9 * std::max(1.0, std::fabs(best.cost)))
                rep.ok("matches the min-cost-flow oracle within 1e-9 relative");
            else
                rep.fail("cost " + fmt_double(recomputed) + " differs from oracle optimum " +
                         fmt_double(best.cost));
        } else {
            rep.ok("instance too large for oracle comparison; structural checks only");
        }
        return rep;
    }

    // transport mode: row/column sums
    std::vector<double> row(r, 0.0), col(n, 0.0);
    double recomputed = 0.0;
    for (const auto& e : sol.entries) {
        row[e.a] += e.flow;
        col[e.b] += e.flow;
        recomputed += cost(inst.a[e.a], inst.b[e.b], cp) * e.flow;
    }
    bool sums_ok = true;
    for (int i = 0; i < r; ++i)
        if (std::fabs(row[i] - static_cast<double>(inst.supply[i])) > 1e-9) {
            rep.fail("row sum of A" + std::to_string(i) + " is " + fmt_double(row[i]) +
                     ", expected " + std::to_string(inst.supply[i]));
            sums_ok = false;
        }
    for (int j = 0; j < n; ++j)
        if (std::fabs(col[j] + static_cast<double>(inst.demand[j])) > 1e-9) {
            rep.fail("column sum of B" + std::to_string(j) + " is " + fmt_double(col[j]) +
                     ", expected " + std::to_string(-inst.demand[j]));
            sums_ok = false;
        }
    if (sums_ok) rep.ok("row and column sums match the supplies and demands");
    if (std::fabs(recomputed - sol.cost) <= 1e-9 * std::max(1.0, std::fabs(recomputed)))
        rep.ok("cost matches recomputation");
    else
        rep.fail("cost mismatch: file says " + fmt_double(sol.cost) + ", recomputed " +
                 fmt_double(recomputed));
    if (!rep.pass) return rep;

    long long total = 0;
    for (long long s : inst.supply) total += s;
    if (r <= 12 && n <= 24 && total <= 512) {
        const auto dense = oracle::make_dense(inst.a, inst.b, cp);
        const auto opt = oracle::ssp_transport(dense, inst.supply, inst.demand);
        if (std::fabs(recomputed - opt.cost) <= 1e-9 * std::max(1.0, std::fabs(opt.cost)))
            rep.ok("matches the min-cost-flow oracle within 1e-9 relative");
        else
            rep.fail("cost " + fmt_double(recomputed) + " differs from oracle optimum " +
                     fmt_double(opt.cost));
    } else {
        rep.ok("instance too large for oracle comparison; feasibility checks only");
    }
    return rep;
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

std::string render_svg(const InstanceFile& inst, const SolutionFile& sol) {
    double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
    auto see = [&](const Point& p) {
        xlo = std::min(xlo, p.x);
        xhi = std::max(xhi, p.x);
        ylo = std::min(ylo, p.y);
        yhi = std::max(yhi, p.y);
    };
    for (const Point& p : inst.a) see(p);
    for (const Point& p : inst.b) see(p);
    const double span = std::max({xhi - xlo, yhi - ylo, 1e-9});
    const double s = 720.0 / span;
    const double pad = 40.0;
    auto tx = [&](double x) { return pad + (x - xlo) * s; };
    auto ty = [&](double y) { return pad + (yhi - y) * s; };
    const double w = pad * 2 + (xhi - xlo) * s;
    const double h = pad * 2 + (yhi - ylo) * s;

    double max_flow = 0.0;
    for (const auto& e : sol.entries) max_flow = std::max(max_flow, e.flow);

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << w << ' ' << h
        << "\">\n";
    const bool transport = inst.transport_mode();
    for (const auto& e : sol.entries) {
        const Point& pa = inst.a[e.a];
        const Point& pb = inst.b[e.b];
        if (transport) {
            const double sw = 0.5 + 3.5 * (max_flow > 0 ? e.flow / max_flow : 0.0);
            out << "  <path d=\"M " << tx(pa.x) << ' ' << ty(pa.y) << " L " << tx(pb.x) << ' '
                << ty(pb.y) << "\" stroke=\"#7a7abf\" stroke-width=\"" << sw
                << "\" fill=\"none\"/>\n";
        } else {
            out << "  <line x1=\"" << tx(pa.x) << "\" y1=\"" << ty(pa.y) << "\" x2=\"" << tx(pb.x)
                << "\" y2=\"" << ty(pb.y) << "\" stroke=\"#7a7abf\" stroke-width=\"1.2\"/>\n";
        }
    }
    for (const Point& p : inst.a)
        out << "  <circle cx=\"" << tx(p.x) << "\" cy=\"" << ty(p.y)
            << "\" r=\"3\" fill=\"#c03030\"/>\n";
    for (const Point& p : inst.b)
        out << "  <circle cx=\"" << tx(p.x) << "\" cy=\"" << ty(p.y)
            << "\" r=\"3\" fill=\"#3060c0\"/>\n";
    out << "</svg>\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// bench records
// ---------------------------------------------------------------------------

std::string csv_header() {
    return "solver,instance,n,r,k,eps,cost,scales,iterations,relaxations,bcp_ops,millis";
}

std::string to_csv(const ResultRecord& rec) {
    std::ostringstream out;
    out << rec.solver << ',' << rec.instance << ',' << rec.n << ',' << rec.r << ',' << rec.k
        << ',' << fmt_double(rec.eps) << ',' << fmt_double(rec.cost) << ',' << rec.scales << ','
        << rec.iterations << ',' << rec.relaxations << ',' << rec.bcp_ops << ','
        << fmt_double(rec.millis);
    return out.str();
}

}  // namespace gpm::io
