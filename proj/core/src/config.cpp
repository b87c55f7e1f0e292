#include "mfl/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "mfl/diagnostics.hpp"
#include "mfl/error.hpp"

namespace mfl {

namespace {

std::string trim(const std::string& s)
{
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double toDouble(const std::string& key, const std::string& v)
{
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos == v.size())
            return x;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::ConfigInvalid, key + ": expected a number, got '" + v + "'");
}

long long toInt(const std::string& key, const std::string& v)
{
    try {
        std::size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos == v.size())
            return x;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::ConfigInvalid, key + ": expected an integer, got '" + v + "'");
}

std::size_t toCount(const std::string& key, const std::string& v)
{
    long long x = toInt(key, v);
    if (x < 0)
        throw Error(ErrorCode::ConfigInvalid, key + ": must be non-negative");
    return static_cast<std::size_t>(x);
}

bool toBool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes")
        return true;
    if (v == "false" || v == "0" || v == "no")
        return false;
    throw Error(ErrorCode::ConfigInvalid, key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> splitList(const std::string& v)
{
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty())
            out.push_back(trim(item));
    return out;
}

struct Entry {
    const char* key;
    const char* type;
    const char* fallback;
    const char* help;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

const std::vector<Entry>& entries()
{
    using C = ExperimentConfig;
    using S = const std::string&;
    static const std::vector<Entry> table = {
        {"density.kind", "string", "uniform-box", "uniform-box | product-gaussian-truncated | two-stream",
         [](C& c, S, S v) { c.density.kind = parseDensityKind(v); }},
        {"density.R0x", "number", "1", "position support radius",
         [](C& c, S k, S v) { c.density.R0x = toDouble(k, v); }},
        {"density.R0v", "number", "1", "velocity support radius",
         [](C& c, S k, S v) { c.density.R0v = toDouble(k, v); }},
        {"density.sigma_x", "number", "0.5", "gaussian width in x (product-gaussian-truncated)",
         [](C& c, S k, S v) { c.density.sigmaX = toDouble(k, v); }},
        {"density.sigma_v", "number", "0.5", "gaussian width in v",
         [](C& c, S k, S v) { c.density.sigmaV = toDouble(k, v); }},
        {"density.stream_center", "number", "0.5", "two-stream bump centre on the first velocity axis",
         [](C& c, S k, S v) { c.density.streamCenter = toDouble(k, v); }},
        {"density.stream_half_width", "number", "0.25", "two-stream bump half width",
         [](C& c, S k, S v) { c.density.streamHalfWidth = toDouble(k, v); }},
        {"density.jitter", "number", "0.05", "within-stratum jitter, fraction of the stratum mass, <= 0.1",
         [](C& c, S k, S v) { c.density.jitter = toDouble(k, v); }},
        {"run.N", "list<int>", "256", "particle counts, ascending",
         [](C& c, S k, S v) {
             c.N.clear();
             for (const auto& s : splitList(v))
                 c.N.push_back(toCount(k, s));
         }},
        {"run.d", "int", "1", "dimension, 1..3", [](C& c, S k, S v) { c.d = static_cast<int>(toInt(k, v)); }},
        {"run.alpha", "number", "0.5", "kernel exponent in (0, 1)",
         [](C& c, S k, S v) { c.alpha = toDouble(k, v); }},
        {"run.sign", "int", "1", "+1 repulsive, -1 attractive, 0 free transport",
         [](C& c, S k, S v) { c.sign = static_cast<int>(toInt(k, v)); }},
        {"run.T", "number", "0.25", "horizon", [](C& c, S k, S v) { c.T = toDouble(k, v); }},
        {"run.kappa", "int", "8", "steps per eps window, >= 2",
         [](C& c, S k, S v) { c.kappa = static_cast<int>(toInt(k, v)); }},
        {"run.beta", "number", "0", "exponent of the force-difference average; 0 = default",
         [](C& c, S k, S v) { c.beta = toDouble(k, v); }},
        {"run.short_time_only", "bool", "false", "admit beta = 1 in d = 1",
         [](C& c, S k, S v) { c.shortTimeOnly = toBool(k, v); }},
        {"run.pair_budget", "int", "100000", "pairs sampled for the force-difference average",
         [](C& c, S k, S v) { c.pairBudget = toCount(k, v); }},
        {"run.seed", "int", "1", "seed for jitter and sampling",
         [](C& c, S k, S v) { c.seed = static_cast<std::uint64_t>(toCount(k, v)); }},
        {"run.collision_factor", "number", "0.001",
         "abort when two positions come closer than this times eps; 0 = only exact coincidence",
         [](C& c, S k, S v) { c.collisionFactor = toDouble(k, v); }},
        {"run.allow_large", "bool", "false", "lift the N <= 4096 ceiling",
         [](C& c, S k, S v) { c.allowLarge = toBool(k, v); }},
        {"run.output", "string", "bundle", "output directory", [](C& c, S, S v) { c.output = v; }},
        {"schedule.M", "int", "4", "stages of the eta schedule, >= 1",
         [](C& c, S k, S v) { c.M = static_cast<int>(toInt(k, v)); }},
        {"schedule.track_boxes", "int", "8", "tracked boxes per stage",
         [](C& c, S k, S v) { c.trackBoxes = toCount(k, v); }},
        {"schedule.linf_refine", "int", "8", "refinement of the eta-scale upper bound",
         [](C& c, S k, S v) { c.linfRefine = static_cast<int>(toInt(k, v)); }},
        {"oracle.nx", "int", "256", "grid cells in x", [](C& c, S k, S v) { c.oracle.nx = toCount(k, v); }},
        {"oracle.nv", "int", "256", "grid cells in v", [](C& c, S k, S v) { c.oracle.nv = toCount(k, v); }},
        {"oracle.Lx", "number", "0", "grid half extent in x; 0 = 2 R0x",
         [](C& c, S k, S v) { c.oracle.Lx = toDouble(k, v); }},
        {"oracle.Lv", "number", "0", "grid half extent in v; 0 = 2 R0v",
         [](C& c, S k, S v) { c.oracle.Lv = toDouble(k, v); }},
        {"oracle.dt", "number", "0", "grid time step; 0 = smallest eps / kappa",
         [](C& c, S k, S v) { c.oracle.dt = toDouble(k, v); }},
        {"oracle.checkpoints", "list<number>", "", "comparison times; empty = 0, T/2, T",
         [](C& c, S k, S v) {
             c.oracle.checkpoints.clear();
             for (const auto& s : splitList(v))
                 c.oracle.checkpoints.push_back(toDouble(k, s));
         }},
        {"oracle.control", "bool", "true", "also run the free-transport control",
         [](C& c, S k, S v) { c.oracle.control = toBool(k, v); }},
    };
    return table;
}

} // namespace

std::map<std::string, std::string> parseKeyValueText(const std::string& text)
{
    std::map<std::string, std::string> out;
    std::stringstream ss(text);
    std::string line, section;
    int lineNo = 0;
    while (std::getline(ss, line)) {
        ++lineNo;
        auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw Error(ErrorCode::ConfigInvalid, "line " + std::to_string(lineNo) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::ConfigInvalid, "line " + std::to_string(lineNo) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty())
            key = section + "." + key;
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

double ExperimentConfig::resolvedBeta() const
{
    return beta > 0.0 ? beta : defaultBeta(d, alpha, shortTimeOnly);
}

void ExperimentConfig::validate() const
{
    std::vector<std::string> bad;
    if (d < 1 || d > 3)
        bad.push_back("run.d: must be 1, 2 or 3");
    if (!(alpha > 0.0 && alpha < 1.0))
        bad.push_back("run.alpha: must lie in (0, 1)");
    if (sign < -1 || sign > 1)
        bad.push_back("run.sign: must be -1, 0 or 1");
    if (!(T > 0.0) || !std::isfinite(T))
        bad.push_back("run.T: must be positive");
    if (kappa < 2)
        bad.push_back("run.kappa: must be at least 2 so that eps >= 2 dt");
    if (N.empty())
        bad.push_back("run.N: at least one particle count is required");
    for (std::size_t i = 0; i < N.size(); ++i) {
        if (N[i] < 2)
            bad.push_back("run.N: every count must be at least 2");
        if (i > 0 && N[i] <= N[i - 1])
            bad.push_back("run.N: counts must be strictly ascending");
        if (N[i] > kDeskCeilingN && !allowLarge)
            bad.push_back("run.N: " + std::to_string(N[i]) + " exceeds the desk ceiling " +
                          std::to_string(kDeskCeilingN) + " (set run.allow_large = true)");
    }
    if (M < 1)
        bad.push_back("schedule.M: must be at least 1");
    if (linfRefine < 1)
        bad.push_back("schedule.linf_refine: must be at least 1");
    if (pairBudget < 1)
        bad.push_back("run.pair_budget: must be positive");
    if (!(collisionFactor >= 0.0))
        bad.push_back("run.collision_factor: must be non-negative");
    if (!(density.R0x > 0.0) || !(density.R0v > 0.0))
        bad.push_back("density.R0x/R0v: must be positive");
    if (density.jitter < 0.0 || density.jitter > 0.1)
        bad.push_back("density.jitter: must lie in [0, 0.1]");
    if (d == 1 && !shortTimeOnly)
        bad.push_back("run.short_time_only: must be true for d = 1 (beta = 1 is the only option there)");
    else if (d >= 1 && d <= 3 && alpha > 0.0 && alpha < 1.0) {
        try {
            validateBeta(resolvedBeta(), d, alpha, shortTimeOnly);
        } catch (const Error& e) {
            bad.push_back(std::string("run.beta: ") + e.what());
        }
    }
    if (oracle.nx < 8 || oracle.nv < 8)
        bad.push_back("oracle.nx/nv: at least 8 cells per axis");
    if (oracle.Lx < 0.0 || oracle.Lv < 0.0 || oracle.dt < 0.0)
        bad.push_back("oracle.Lx/Lv/dt: must be non-negative");
    for (double t : oracle.checkpoints)
        if (t < 0.0 || t > T)
            bad.push_back("oracle.checkpoints: times must lie in [0, T]");
    if (!bad.empty()) {
        std::string msg = "invalid configuration";
        for (const auto& b : bad)
            msg += "\n  " + b;
        throw Error(ErrorCode::ConfigInvalid, msg);
    }
}

std::string ExperimentConfig::toJson() const
{
    nlohmann::ordered_json j;
    j["density"] = {{"kind", densityKindName(density.kind)},
                    {"R0x", density.R0x},
                    {"R0v", density.R0v},
                    {"sigma_x", density.sigmaX},
                    {"sigma_v", density.sigmaV},
                    {"stream_center", density.streamCenter},
                    {"stream_half_width", density.streamHalfWidth},
                    {"jitter", density.jitter}};
    j["run"] = {{"N", N},
                {"d", d},
                {"alpha", alpha},
                {"sign", sign},
                {"T", T},
                {"kappa", kappa},
                {"beta", resolvedBeta()},
                {"short_time_only", shortTimeOnly},
                {"pair_budget", pairBudget},
                {"seed", seed},
                {"collision_factor", collisionFactor},
                {"allow_large", allowLarge},
                {"output", output}};
    j["schedule"] = {{"M", M}, {"track_boxes", trackBoxes}, {"linf_refine", linfRefine}};
    j["oracle"] = {{"nx", oracle.nx}, {"nv", oracle.nv},   {"Lx", oracle.Lx},
                   {"Lv", oracle.Lv}, {"dt", oracle.dt},   {"checkpoints", oracle.checkpoints},
                   {"control", oracle.control}};
    return j.dump();
}

ExperimentConfig configFromText(const std::string& text)
{
    ExperimentConfig cfg;
    auto kv = parseKeyValueText(text);
    std::vector<std::string> bad;
    for (const auto& [key, value] : kv) {
        auto it = std::find_if(entries().begin(), entries().end(), [&](const Entry& e) { return key == e.key; });
        if (it == entries().end()) {
            bad.push_back(key + ": unknown key");
            continue;
        }
        try {
            it->set(cfg, key, value);
        } catch (const Error& e) {
            bad.push_back(e.code() == ErrorCode::ConfigInvalid ? e.what() : key + ": " + e.what());
        }
    }
    if (!bad.empty()) {
        std::string msg = "invalid configuration";
        for (const auto& b : bad)
            msg += "\n  " + b;
        throw Error(ErrorCode::ConfigInvalid, msg);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig configFromFile(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::ConfigInvalid, "cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return configFromText(ss.str());
}

std::string configSchema()
{
    std::ostringstream os;
    std::string section;
    for (const auto& e : entries()) {
        std::string key = e.key;
        auto dot = key.find('.');
        std::string sec = key.substr(0, dot);
        if (sec != section) {
            if (!section.empty())
                os << "\n";
            os << "[" << sec << "]\n";
            section = sec;
        }
        os << key.substr(dot + 1) << " = " << e.fallback << "    # " << e.type << ": " << e.help << "\n";
    }
    return os.str();
}

EtaSchedule etaSchedule(double eps, int M)
{
    if (!(eps > 0.0 && eps < 1.0))
        throw Error(ErrorCode::InvalidArgument, "eta schedule needs 0 < eps < 1");
    if (M < 1)
        throw Error(ErrorCode::InvalidArgument, "eta schedule needs M >= 1");
    EtaSchedule s;
    s.M = M;
    s.eta0 = std::sqrt(eps);
    s.r = std::pow(eps, -1.0 / (4.0 * M));
    for (int i = 0; i <= M; ++i)
        s.etas.push_back(s.eta0 * std::pow(s.r, i));
    s.etaM = s.etas.back();
    return s;
}

} // namespace mfl
