#include "mfl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mfl/diagnostics.hpp"
#include "mfl/error.hpp"
#include "mfl/oracle.hpp"
#include "mfl/shells.hpp"

#ifndef MFL_VERSION_STRING
#define MFL_VERSION_STRING "0.0.0"
#endif

namespace mfl {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string versionString() { return MFL_VERSION_STRING; }

namespace {

void writeFile(const fs::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
    out << content;
}

std::string readFile(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::InvalidArgument, "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// JSON has no infinity; unbounded values are written as null.
ojson num(double x) { return std::isfinite(x) ? ojson(x) : ojson(nullptr); }

ojson gateJson(const std::optional<GateViolation>& g)
{
    if (!g)
        return nullptr;
    return ojson{{"time", g->time}, {"inequality", g->inequality}, {"lhs", num(g->lhs)}, {"rhs", num(g->rhs)}};
}

std::vector<std::size_t> sampleIndices(const Trajectory& traj, double eps)
{
    std::vector<std::size_t> idx;
    for (std::size_t j = 0;; ++j) {
        double t = static_cast<double>(j) * eps;
        if (t > traj.horizon() + 1e-12)
            break;
        std::size_t k = traj.indexAt(t);
        if (idx.empty() || idx.back() != k)
            idx.push_back(k);
    }
    if (idx.back() + 1 != traj.times.size())
        idx.push_back(traj.times.size() - 1);
    return idx;
}

ojson shellsAt(const Trajectory& traj, std::size_t idx, std::size_t anchor, const SampleRecord& s, double eps,
               std::vector<std::string>& violations)
{
    const auto& snap = traj.snapshots[idx];
    const int d = snap.dim();
    const std::size_t N = snap.size();
    ojson j;
    j["t"] = traj.times[idx];
    j["anchor"] = anchor;
    if (!(s.K > 0.0)) {
        j["skipped"] = "K = 0";
        return j;
    }
    auto pos = positionShells(snap, anchor, eps, s.K, s.R);
    auto posCheck = shellCountBoundCheck(pos, s.linfEpsHi, eps, N, d, s.K);
    auto vel = velocityShells(snap, anchor, pos.remainder, eps, s.Ebar, s.K);
    auto velCheck = shellCountBoundCheck(vel, s.linfEpsHi, eps, N, d, pos.base);
    auto q0 = q0Split(pos.remainder, snap, anchor, eps, s.K, s.dEbar);
    if (!posCheck.ok())
        violations.push_back("position shell count above the volumetric bound at t = " + std::to_string(j["t"].get<double>()));
    if (!velCheck.ok())
        violations.push_back("velocity shell count above the volumetric bound at t = " + std::to_string(j["t"].get<double>()));
    j["position"] = ojson::parse(shellReportJson(pos, posCheck));
    j["velocity"] = ojson::parse(shellReportJson(vel, velCheck));
    j["q0"] = {{"threshold", q0.threshold}, {"prime", q0.prime.size()}, {"second", q0.second.size()}};

    double t = traj.times[idx];
    std::optional<std::size_t> other;
    if (t >= eps - 1e-12)
        other = traj.indexAt(t - eps + 1e-12 * eps);
    else if (t + eps <= traj.horizon() + 1e-12)
        other = traj.indexAt(t + eps);
    if (other && *other != idx && std::fabs(traj.times[*other] - t) <= eps * (1.0 + 1e-9)) {
        auto ps = shellStabilityCheck(traj, pos, idx, *other);
        ojson st{{"other_t", traj.times[*other]}, {"position_checked", ps.checked},
                 {"position_violations", ps.violations.size()}};
        if (vel.kMax > 0) {
            auto vs = shellStabilityCheck(traj, vel, idx, *other);
            st["velocity_checked"] = vs.checked;
            st["velocity_violations"] = vs.violations.size();
        }
        j["stability"] = st;
    }

    double eta = std::sqrt(eps);
    auto two = twoScaleShells(snap, anchor, eps, eta, s.K, s.R);
    auto outerCheck = shellCountBoundCheck(two.outer, s.linfEtaHi, eta, N, d, s.K);
    auto innerCheck = shellCountBoundCheck(two.inner, s.linfEpsHi, eps, N, d, s.K);
    if (!outerCheck.ok() || !innerCheck.ok())
        violations.push_back("two-scale shell count above the volumetric bound at t = " + std::to_string(t));
    j["two_scale"] = {{"eta", eta},
                      {"inner_cap", two.innerCap},
                      {"outer", ojson::parse(shellReportJson(two.outer, outerCheck))},
                      {"inner", ojson::parse(shellReportJson(two.inner, innerCheck))}};
    return j;
}

} // namespace

std::optional<GateViolation> checkGates(const SampleRecord& s, double eps, int d, double alpha, double beta)
{
    const double epsBeta = std::pow(eps, beta);
    double denom = 12.0 * eps * s.K * s.dEbar;
    double g1 = denom > 0.0 ? 1.0 / denom : std::numeric_limits<double>::infinity();
    if (!(s.m <= g1))
        return GateViolation{s.t, "m <= 1/(12 eps K dEbar)", s.m, g1};
    if (!(s.m > 0.0) || !std::isfinite(s.m))
        return GateViolation{s.t, "m finite and positive", s.m, 0.0};
    double mInv = std::pow(s.m, -2.0 * d);
    double g2 = std::pow(eps, d - alpha) * mInv * std::pow(s.K, 2.0 * d - alpha);
    if (!(g2 <= epsBeta))
        return GateViolation{s.t, "eps^(d-alpha) m^(-2d) K^(2d-alpha) <= eps^beta", g2, epsBeta};
    double g3 = std::pow(eps, 2.0 * d - 3.0 * alpha) * mInv * std::pow(s.Ebar, d) * std::pow(s.K, d - alpha);
    if (!(g3 <= epsBeta))
        return GateViolation{s.t, "eps^(2d-3alpha) m^(-2d) Ebar^d K^(d-alpha) <= eps^beta", g3, epsBeta};
    return std::nullopt;
}

std::string diagnosticsCsv(const std::vector<SampleRecord>& samples)
{
    std::ostringstream os;
    os.precision(17);
    os << "t,R,K,m,Ebar,dEbar,linf_eps_lo,linf_eps_hi,linf_eta_lo,linf_eta_hi\n";
    for (const auto& s : samples)
        os << s.t << "," << s.R << "," << s.K << "," << s.m << "," << s.Ebar << "," << s.dEbar << "," << s.linfEpsLo
           << "," << s.linfEpsHi << "," << s.linfEtaLo << "," << s.linfEtaHi << "\n";
    return os.str();
}

RunResult simulateOne(const ExperimentConfig& cfg, std::size_t requestedN)
{
    RunResult res;
    res.requestedN = requestedN;
    const int d = cfg.d;
    const ForceKernel kernel = cfg.kernel();
    const double beta = cfg.resolvedBeta();

    QuietStart qs = quietStartInit(cfg.density, requestedN, d, cfg.seed);
    const ParticleEnsemble& ens0 = qs.ensemble;
    res.N = ens0.size();
    RunOptions ro;
    ro.T = cfg.T;
    ro.kappa = cfg.kappa;
    ro.collisionFactor = cfg.collisionFactor;
    ro.recordFieldVecs = true;
    res.traj = run(ens0, kernel, ro);
    const Trajectory& traj = res.traj;
    if (traj.times.empty()) {
        const auto& c = *traj.collision;
        throw Error(ErrorCode::CollisionDetected, "initial configuration has particles " + std::to_string(c.i) +
                                                      " and " + std::to_string(c.j) + " within the collision distance");
    }
    const double eps = traj.eps;
    res.eps = eps;
    const std::size_t nt = traj.times.size();

    auto radii = supportRadiiSeries(traj);
    auto Ebar = windowedForceAvgSeries(traj, eps);
    DiffAvgOptions dopt;
    dopt.beta = beta;
    dopt.pairBudget = cfg.pairBudget;
    dopt.seed = cfg.seed;
    dopt.shortTimeOnly = cfg.shortTimeOnly;
    auto dE = windowedForceDiffAvg(traj, eps, cfg.alpha, dopt).series;

    std::vector<double> mNow(nt), mRun(nt);
    for (std::size_t k = 0; k < nt; ++k) {
        mNow[k] = minPhaseSeparation(traj.snapshots[k], eps).m;
        mRun[k] = k == 0 ? mNow[k] : std::max(mRun[k - 1], mNow[k]);
    }
    std::vector<double> intE(nt, 0.0);
    for (std::size_t k = 1; k < nt; ++k)
        intE[k] = intE[k - 1] + 0.5 * traj.dt * (Ebar[k - 1] + Ebar[k]);

    const double eta0 = std::sqrt(eps);
    const double cube = std::ldexp(1.0, 2 * d);
    for (std::size_t k : sampleIndices(traj, eps)) {
        SampleRecord s;
        s.index = k;
        s.t = traj.times[k];
        s.R = radii[k].R;
        s.K = radii[k].K;
        s.m = mRun[k];
        s.mNow = mNow[k];
        s.Ebar = Ebar[k];
        s.dEbar = dE[k];
        auto le = discreteLinf(traj.snapshots[k], eps);
        auto lh = discreteLinf(traj.snapshots[k], eta0);
        s.linfEpsLo = le.lower;
        s.linfEpsHi = le.upper;
        s.linfEtaLo = lh.lower;
        s.linfEtaHi = lh.upper;
        s.mlinfHolds = checkMlinf(s.mNow, s.linfEpsHi, d).holds;
        if (!s.mlinfHolds)
            ++res.mlinfViolations;
        for (const auto* b : {&le, &lh})
            if (b->lower > b->upper * (1.0 + 1e-12) || b->upper > cube * b->lower * (1.0 + 1e-12))
                res.invariantViolations.push_back("linf bracket out of order at t = " + std::to_string(s.t));
        res.samples.push_back(s);
    }
    if (res.mlinfViolations > 0)
        res.invariantViolations.push_back(std::to_string(res.mlinfViolations) + " samples with linf above (4m)^{2d}");
    for (const auto& r : radii)
        res.transportBoundHolds = res.transportBoundHolds && r.transportBoundHolds;
    if (!res.transportBoundHolds)
        res.invariantViolations.push_back("R(T) <= R(0) + T K(T) violated");

    const auto& s0 = res.samples.front();
    const double m0 = s0.m, K0 = s0.K, R0 = s0.R;
    const double linfCap = std::pow(8.0 * m0, 2 * d);
    res.boundsHoldToHorizon = true;
    for (const auto& s : res.samples) {
        bool ok = s.m <= 2.0 * m0 && s.K <= 2.0 * (1.0 + K0) && s.R <= 2.0 * (1.0 + R0) && s.linfEpsHi <= linfCap;
        if (!ok) {
            res.boundsHoldToHorizon = false;
            break;
        }
        res.Tobs = s.t;
    }
    for (std::size_t k = 1; k < nt; ++k) {
        double denom = traj.times[k] + eps * Ebar[k] + intE[k];
        if (denom > 0.0)
            res.lemma4FittedC = std::max(res.lemma4FittedC, (radii[k].K - K0) / denom);
    }

    std::vector<GateViolation> gates;
    for (const auto& s : res.samples)
        if (auto g = checkGates(s, eps, d, cfg.alpha, beta)) {
            gates.push_back(*g);
            break;
        }

    std::ostringstream tracking;
    if (eps < 1.0) {
        EtaSchedule sched = etaSchedule(eps, cfg.M);
        const double capC = std::pow(eps, -1.0 / (8.0 * cfg.M));
        const std::size_t stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(eps / traj.dt)));
        std::size_t boxId = 0;
        for (int i = 1; i <= cfg.M; ++i) {
            StageReport st;
            st.stage = i;
            st.tStart = (i - 1) * cfg.T / cfg.M;
            st.tEnd = i * cfg.T / cfg.M;
            if (st.tEnd > traj.horizon() + 1e-12)
                break;
            st.eta = sched.etas[static_cast<std::size_t>(i)];
            std::size_t tIdx = traj.indexAt(st.tEnd);
            const auto& snap = traj.snapshots[tIdx];

            BackwardStepOptions bo;
            bo.eps = eps;
            bo.beta = beta;
            PreservationOptions po;
            po.boxes = cfg.trackBoxes;
            po.seed = cfg.seed + static_cast<std::uint64_t>(i);
            po.stride = stride;
            po.refine = cfg.linfRefine;

            // The growth constant is fitted on the tracked boxes and as many random extra ones.
            std::vector<std::size_t> anchors = preservationAnchors(snap.size(), po);
            std::mt19937_64 rng(cfg.seed * 7919u + static_cast<std::uint64_t>(i));
            for (std::size_t b = 0; b < cfg.trackBoxes; ++b)
                anchors.push_back(rng() % snap.size());
            std::vector<PhaseParallelepiped> pilots;
            for (std::size_t a : anchors)
                pilots.push_back(PhaseParallelepiped::box(d, snap.positions()[a], snap.velocities()[a], st.eta));
            st.pilotGrowth = pilotGrowthConstant(pilots, traj, tIdx, stride, kernel, bo);
            bo.growth = 2.0 * st.pilotGrowth;
            st.report = linfPreservationReport(traj, tIdx, st.eta, eps, kernel, bo, po);
            for (const auto& tr : st.report.tracks) {
                if (tr.end == TrackEnd::NormConditions && tr.steps.back().time > st.tStart + 1e-12)
                    st.normStopInsideStage = true;
                if (!tr.monotone())
                    res.invariantViolations.push_back("backward count increased in stage " + std::to_string(i));
                std::string lines = tr.toJsonLines(boxId++);
                std::string tag = "{\"stage\":" + std::to_string(i) + ",";
                std::size_t pos = 0;
                while ((pos = lines.find("{\"box\"", pos)) != std::string::npos) {
                    lines.replace(pos, 1, tag);
                    pos += tag.size();
                }
                tracking << lines;
            }
            if (st.normStopInsideStage)
                gates.push_back({st.tEnd, "no-stretch horizon T' >= T/M", 0.0, cfg.T / cfg.M});
            if (!(st.report.fittedC <= capC))
                gates.push_back({st.tEnd, "fitted C <= eps^(-1/(8M))", st.report.fittedC, capC});
            res.stages.push_back(std::move(st));
        }
    }
    for (const auto& g : gates)
        if (!res.gate || g.time < res.gate->time)
            res.gate = g;
    res.trackingJsonl = tracking.str();

    ojson shells = ojson::array();
    for (const SampleRecord* s : {&res.samples.front(), &res.samples.back()}) {
        std::size_t anchorA = minPhaseSeparation(traj.snapshots[s->index], eps).i;
        for (std::size_t anchor : {anchorA, res.N / 2}) {
            shells.push_back(shellsAt(traj, s->index, anchor, *s, eps, res.invariantViolations));
            if (anchor == anchorA && anchorA == res.N / 2)
                break;
        }
        if (res.samples.size() == 1)
            break;
    }
    res.shellsJson = shells.dump(2) + "\n";
    return res;
}

ExperimentResult runExperiment(const ExperimentConfig& cfg, bool write)
{
    cfg.validate();
    ExperimentResult out;
    ojson eps, tobs, gates, t1, t4;
    bool tobsMonotone = true;
    double lastTobs = -1.0;
    std::optional<std::size_t> nTilde;
    for (std::size_t N : cfg.N) {
        RunResult r = simulateOne(cfg, N);
        std::string key = std::to_string(N);
        eps[key] = r.eps;
        tobs[key] = r.Tobs;
        gates[key] = gateJson(r.gate);
        if (r.Tobs < lastTobs)
            tobsMonotone = false;
        lastTobs = r.Tobs;
        bool complete = r.traj.status == RunStatus::Complete;
        if (!nTilde && !r.gate && complete)
            nTilde = N;
        ojson c{{"N", r.N},
                {"status", complete ? "complete" : r.traj.status == RunStatus::Collision ? "collision" : "non-finite"},
                {"horizon", r.traj.horizon()},
                {"m0", r.samples.front().m},
                {"K0", r.samples.front().K},
                {"R0", r.samples.front().R},
                {"bounds_hold_to_horizon", r.boundsHoldToHorizon},
                {"mlinf_samples", r.samples.size()},
                {"mlinf_violations", r.mlinfViolations},
                {"transport_bound_holds", r.transportBoundHolds},
                {"lemma4_fitted_C", r.lemma4FittedC}};
        if (r.traj.collision) {
            const auto& ci = *r.traj.collision;
            c["collision"] = {{"time", ci.time}, {"i", ci.i}, {"j", ci.j}, {"distance", ci.distance}};
            out.collision = true;
        }
        t1[key] = c;
        ojson stages = ojson::array();
        for (const auto& st : r.stages) {
            std::size_t tracked = 0, normStops = 0;
            for (const auto& b : st.report.boxes)
                tracked += b.tracked ? 1 : 0;
            normStops = st.report.boxes.size() - tracked;
            stages.push_back({{"stage", st.stage},
                              {"t", st.tEnd},
                              {"eta", st.eta},
                              {"fitted_C", st.report.fittedC},
                              {"required_slack", st.report.requiredSlack},
                              {"linf_eta_hi", st.report.linfEtaUpper},
                              {"linf_eps0_lo", st.report.linfEps0Lower},
                              {"chain_fitted_C", st.report.chainFittedC},
                              {"pilot_growth", st.pilotGrowth},
                              {"boxes", st.report.boxes.size()},
                              {"tracked_to_zero", tracked},
                              {"norm_condition_stops", normStops}});
        }
        t4[key] = stages;
        for (const auto& v : r.invariantViolations)
            out.invariantViolations.push_back("N=" + key + ": " + v);
        if (write) {
            fs::path dir = fs::path(cfg.output) / ("N" + key);
            fs::create_directories(dir);
            writeFile(dir / "diagnostics.csv", diagnosticsCsv(r.samples));
            writeFile(dir / "shells.json", r.shellsJson);
            writeFile(dir / "tracking.jsonl", r.trackingJsonl);
        }
        r.traj.snapshots.clear();
        r.traj.fieldVecs.clear();
        r.traj.fieldMags.clear();
        out.runs.push_back(std::move(r));
    }
    t1["T_obs_nondecreasing_in_N"] = tobsMonotone;
    ojson summary;
    summary["config"] = ojson::parse(cfg.toJson());
    summary["epsilon"] = eps;
    summary["T_obs"] = tobs;
    summary["gate_first_violation"] = gates;
    summary["theorem1_checks"] = t1;
    summary["theorem4_fitted_C"] = t4;
    summary["fconv_by_N"] = ojson::object();
    summary["empirical_N_tilde"] = nTilde ? ojson(*nTilde) : ojson(nullptr);
    summary["invariant_violations"] = out.invariantViolations;
    summary["version"] = versionString();
    out.summaryJson = summary.dump(2) + "\n";
    if (write) {
        fs::create_directories(cfg.output);
        writeFile(fs::path(cfg.output) / "summary.json", out.summaryJson);
    }
    return out;
}

double fittedDecayExponent(const std::vector<std::size_t>& N, const std::vector<double>& y)
{
    if (N.size() != y.size() || N.size() < 2)
        throw Error(ErrorCode::InvalidArgument, "decay fit needs at least two matching points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(N.size());
    for (std::size_t i = 0; i < N.size(); ++i) {
        double x = std::log2(static_cast<double>(N[i]));
        double v = -std::log2(std::max(y[i], 1e-300));
        sx += x;
        sy += v;
        sxx += x * x;
        sxy += x * v;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

struct ParticleRun {
    Trajectory traj;
    double eps = 0.0;
};

ParticleRun particleRun(const ExperimentConfig& cfg, std::size_t N, const ForceKernel& kernel)
{
    QuietStart qs = quietStartInit(cfg.density, N, 1, cfg.seed);
    RunOptions ro;
    ro.T = cfg.T;
    ro.kappa = cfg.kappa;
    ro.collisionFactor = cfg.collisionFactor;
    ro.recordFieldVecs = true;
    ParticleRun pr;
    pr.traj = run(qs.ensemble, kernel, ro);
    pr.eps = pr.traj.eps;
    if (pr.traj.status != RunStatus::Complete)
        throw Error(ErrorCode::CollisionDetected, "particle run for N = " + std::to_string(N) + " stopped early");
    return pr;
}

double kernel1d(double r, const ForceKernel& k)
{
    if (r == 0.0)
        return 0.0;
    return k.sign * (r > 0 ? 1.0 : -1.0) * std::pow(std::fabs(r), -k.alpha);
}

} // namespace

ConvergenceResult convergenceStudy(const ExperimentConfig& cfg, bool write)
{
    cfg.validate();
    if (cfg.d != 1)
        throw Error(ErrorCode::UnsupportedDimension, "the convergence study runs in d = 1 only");
    ConvergenceResult res;
    const ForceKernel kernel = cfg.kernel();
    ForceKernel free = kernel;
    free.sign = 0;

    double epsMin = epsilonScale(std::max(cfg.density.R0x, cfg.density.R0v), cfg.N.back(), 1);
    double dt = cfg.oracle.dt > 0.0 ? cfg.oracle.dt : epsMin / cfg.kappa;
    auto steps = static_cast<std::size_t>(std::ceil(cfg.T / dt - 1e-9));
    dt = cfg.T / static_cast<double>(steps);
    std::vector<double> cps = cfg.oracle.checkpoints;
    if (cps.empty())
        cps = {0.0, 0.5 * cfg.T, cfg.T};
    for (double& c : cps)
        c = std::round(c / dt) * dt;
    res.checkpoints = cps;

    double Lx = cfg.oracle.Lx > 0.0 ? cfg.oracle.Lx : 2.0 * cfg.density.R0x;
    double Lv = cfg.oracle.Lv > 0.0 ? cfg.oracle.Lv : 2.0 * cfg.density.R0v;
    GridDensity f0 = GridDensity::fromSpec(cfg.density, cfg.oracle.nx, cfg.oracle.nv, Lx, Lv);
    OracleOptions oo;
    oo.T = cfg.T;
    oo.dt = dt;
    oo.checkpoints = cps;
    OracleRun oracle = solveVlasov(f0, kernel, oo);
    for (double v : oracle.massDrift)
        res.oracleMaxMassDrift = std::max(res.oracleMaxMassDrift, v);
    for (double v : oracle.clipMass)
        res.oracleMaxClip = std::max(res.oracleMaxClip, v);
    std::optional<OracleRun> control;
    if (cfg.oracle.control)
        control = solveVlasov(f0, free, oo);

    // One dictionary for every time, N and the control: centres cover the free-transport reach.
    WeakDistanceOptions wo;
    wo.halfExtent = std::max(cfg.density.R0x + cfg.T * cfg.density.R0v, cfg.density.R0v);

    const double r = 0.1;
    const double w = 0.4;
    for (std::size_t N : cfg.N) {
        ParticleRun pr = particleRun(cfg, N, kernel);
        const auto& traj = pr.traj;
        std::optional<ParticleRun> pc;
        if (control)
            pc = particleRun(cfg, N, free);
        for (double t : cps) {
            ConvergenceRow row;
            row.N = N;
            row.t = t;
            row.weak = weakDistance(traj.snapshots[traj.indexAt(t)], oracle.snapshotAt(t), wo);
            if (control)
                row.weakControl = weakDistance(pc->traj.snapshots[pc->traj.indexAt(t)], control->snapshotAt(t), wo);
            if (t == cps.back())
                row.fconv = forceConvergenceStat(traj, oracle, pr.eps).back();
            res.rows.push_back(row);
        }
        res.fconvByN.push_back(forceConvergenceStat(traj, oracle, pr.eps).back());

        // Near-pair and far-field parts of the force at the final time, split at distance r.
        const auto& snapT = traj.snapshots.back();
        const std::size_t n = snapT.size();
        const auto rho = oracle.snapshots.empty() ? std::vector<double>{} : oracle.snapshotAt(cps.back()).density();
        const GridDensity& gT = oracle.snapshotAt(cps.back());
        double near = 0.0, far = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double xi = snapT.positions()[i][0];
            double nearSum = 0.0, farSum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i)
                    continue;
                double dx = xi - snapT.positions()[j][0];
                if (std::fabs(dx) < r)
                    nearSum += std::pow(std::fabs(dx), -cfg.alpha);
                else
                    farSum += kernel1d(dx, kernel);
            }
            double cont = 0.0;
            for (std::size_t c = 0; c < gT.nx(); ++c) {
                double dx = xi - gT.x(c);
                if (std::fabs(dx) >= r)
                    cont += rho[c] * gT.dx() * kernel1d(dx, kernel);
            }
            near = std::max(near, nearSum / static_cast<double>(n));
            far = std::max(far, std::fabs(farSum / static_cast<double>(n) - cont));
        }
        res.nearField.push_back(near);
        res.farFieldError.push_back(far);

        // <mu(T), phi> - <mu(0), phi> - int <mu, v d_x phi + F_inf d_v phi> for a fixed gaussian phi.
        auto phi = [w](double x, double v) { return std::exp(-0.5 * (x * x + v * v) / (w * w)); };
        auto pair = [&](std::size_t k) {
            const auto& s = traj.snapshots[k];
            double val = 0.0, gen = 0.0;
            for (std::size_t i = 0; i < s.size(); ++i) {
                double x = s.positions()[i][0], v = s.velocities()[i][0];
                double p = phi(x, v);
                val += p;
                gen += v * (-x / (w * w)) * p + oracle.fieldAt(traj.times[k], x) * (-v / (w * w)) * p;
            }
            return std::make_pair(val / static_cast<double>(s.size()), gen / static_cast<double>(s.size()));
        };
        double integral = 0.0;
        auto prev = pair(0);
        const double first = prev.first;
        for (std::size_t k = 1; k < traj.times.size(); ++k) {
            auto cur = pair(k);
            integral += 0.5 * (traj.times[k] - traj.times[k - 1]) * (prev.second + cur.second);
            prev = cur;
        }
        res.weakResidual.push_back(std::fabs(prev.first - first - integral));
    }

    for (std::size_t c = 0; c < cps.size(); ++c) {
        std::vector<double> y;
        for (const auto& row : res.rows)
            if (row.t == cps[c])
                y.push_back(row.weak);
        res.weakExponent.push_back(cfg.N.size() >= 2 ? fittedDecayExponent(cfg.N, y) : 0.0);
    }
    res.fconvExponent = cfg.N.size() >= 2 ? fittedDecayExponent(cfg.N, res.fconvByN) : 0.0;

    ojson fconv, near, far, resid;
    for (std::size_t i = 0; i < cfg.N.size(); ++i) {
        std::string key = std::to_string(cfg.N[i]);
        fconv[key] = res.fconvByN[i];
        near[key] = res.nearField[i];
        far[key] = res.farFieldError[i];
        resid[key] = res.weakResidual[i];
    }
    ojson summary;
    summary["config"] = ojson::parse(cfg.toJson());
    summary["checkpoints"] = cps;
    summary["weak_decay_exponent"] = res.weakExponent;
    summary["fconv_by_N"] = fconv;
    summary["fconv_decay_exponent"] = res.fconvExponent;
    summary["near_field_by_N"] = near;
    summary["near_field_radius"] = r;
    summary["far_field_error_by_N"] = far;
    summary["weak_residual_by_N"] = resid;
    summary["oracle"] = {{"nx", cfg.oracle.nx},
                         {"nv", cfg.oracle.nv},
                         {"Lx", Lx},
                         {"Lv", Lv},
                         {"dt", dt},
                         {"max_mass_drift", res.oracleMaxMassDrift},
                         {"max_clip_mass", res.oracleMaxClip}};
    summary["version"] = versionString();
    res.summaryJson = summary.dump(2) + "\n";
    if (write) {
        fs::create_directories(cfg.output);
        std::ostringstream csv;
        csv.precision(17);
        csv << "N,t,weak_distance,weak_distance_control,fconv\n";
        for (const auto& row : res.rows) {
            csv << row.N << "," << row.t << "," << row.weak << ",";
            if (row.weakControl >= 0.0)
                csv << row.weakControl;
            csv << ",";
            if (row.fconv >= 0.0)
                csv << row.fconv;
            csv << "\n";
        }
        writeFile(fs::path(cfg.output) / "convergence.csv", csv.str());
        writeFile(fs::path(cfg.output) / "summary.json", res.summaryJson);
    }
    return res;
}

VerifyReport verifyBundle(const std::string& dirName)
{
    VerifyReport rep;
    fs::path dir(dirName);
    auto summary = ojson::parse(readFile(dir / "summary.json"));
    const auto& run = summary.at("config").at("run");
    const int d = run.at("d").get<int>();
    const double cube = std::ldexp(1.0, 2 * d);
    for (const auto& Nv : run.at("N")) {
        std::string key = std::to_string(Nv.get<std::size_t>());
        fs::path sub = dir / ("N" + key);
        std::istringstream csv(readFile(sub / "diagnostics.csv"));
        std::string line;
        std::getline(csv, line);
        if (line != "t,R,K,m,Ebar,dEbar,linf_eps_lo,linf_eps_hi,linf_eta_lo,linf_eta_hi")
            rep.violations.push_back("N=" + key + ": unexpected diagnostics header");
        double prevR = 0.0, prevK = 0.0;
        while (std::getline(csv, line)) {
            if (line.empty())
                continue;
            std::vector<double> c;
            std::stringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ','))
                c.push_back(std::stod(cell));
            ++rep.checked;
            auto bad = [&](const std::string& what) {
                rep.violations.push_back("N=" + key + " t=" + std::to_string(c[0]) + ": " + what);
            };
            if (c.size() != 10) {
                bad("expected 10 columns");
                continue;
            }
            for (double v : c)
                if (!(v >= 0.0))
                    bad("negative or non-finite entry");
            if (c[1] < prevR || c[2] < prevK)
                bad("R or K decreased");
            prevR = c[1];
            prevK = c[2];
            for (int s : {6, 8})
                if (c[s] > c[s + 1] * (1.0 + 1e-12) || c[s + 1] > cube * c[s] * (1.0 + 1e-12))
                    bad("linf bracket out of order");
            if (c[7] > std::pow(4.0 * c[3], 2 * d) * (1.0 + 1e-12))
                bad("linf above (4m)^{2d}");
        }
        std::istringstream tr(readFile(sub / "tracking.jsonl"));
        while (std::getline(tr, line)) {
            if (line.empty())
                continue;
            auto j = ojson::parse(line);
            ++rep.checked;
            if (!j.at("monotone").get<bool>())
                rep.violations.push_back("N=" + key + " box " + std::to_string(j.at("box").get<std::size_t>()) +
                                         ": backward count increased");
        }
        auto shells = ojson::parse(readFile(sub / "shells.json"));
        for (const auto& s : shells)
            for (const char* part : {"position", "velocity"}) {
                if (!s.contains(part))
                    continue;
                for (const auto& e : s.at(part).at("shells")) {
                    ++rep.checked;
                    if (e.at("ratio").is_number() && e.at("ratio").get<double>() > 1.0 + 1e-12)
                        rep.violations.push_back("N=" + key + ": shell count above the volumetric bound");
                }
            }
    }
    return rep;
}

} // namespace mfl
