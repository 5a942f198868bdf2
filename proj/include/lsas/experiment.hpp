#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "lsas/ci_test.hpp"
#include "lsas/engine.hpp"
#include "lsas/fixtures.hpp"
#include "lsas/graph_io.hpp"
#include "lsas/scm.hpp"
#include "lsas/scm_io.hpp"

namespace lsas {

/// Bad or contradictory experiment settings (CLI exit code 1).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration

enum class SourceKind { Fixture, Network, Random, GraphFile, Csv };

/// Inclusive integer range; a single value has lo == hi.
struct Range {
    std::size_t lo = 0;
    std::size_t hi = 0;
    friend bool operator==(const Range&, const Range&) = default;
};

/// "8" or "8-10".
inline Range parse_range(const std::string& s) {
    auto dash = s.find('-');
    auto num = [&](const std::string& t) {
        std::size_t v = 0;
        auto res = std::from_chars(t.data(), t.data() + t.size(), v);
        if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
            throw ConfigError("expected a count or range, got '" + s + "'");
        return v;
    };
    if (dash == std::string::npos) {
        const auto v = num(s);
        return {v, v};
    }
    Range r{num(s.substr(0, dash)), num(s.substr(dash + 1))};
    if (r.lo > r.hi) throw ConfigError("empty range '" + s + "'");
    return r;
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m{"lsas", "ehs", "oracle-lsas", "oracle-ehs"};
    return m;
}

inline bool is_oracle_method(const std::string& m) { return m.rfind("oracle-", 0) == 0; }

struct ExperimentConfig {
    SourceKind source = SourceKind::Fixture;
    /// Builtin fixture or benchmark network name.
    std::string fixture = "fig4";
    std::string graph_path;
    std::string csv_path;
    /// Directory written by cmd_generate; cmd_run then reads its datasets.
    std::string input_dir;
    Range n{10, 10};
    double degree = 3.0;
    /// Latent count (or range) drawn among nodes with two or more children...
    std::optional<Range> latent_count;
    /// ...or an explicit list of latent node names.
    std::vector<std::string> latent_names;
    std::optional<std::pair<std::string, std::string>> pair;
    std::vector<std::size_t> sizes{1000, 5000, 10000, 15000};
    std::size_t reps = 100;
    double alpha = kDefaultAlpha;
    /// nullopt: source preset (3 for fixtures, 5 or 7 for networks, unbounded otherwise).
    std::optional<std::size_t> cap;
    std::uint64_t seed = 1;
    std::vector<std::string> methods{"lsas", "ehs"};
    std::string out = "out";
    /// 0: one worker per hardware thread.
    std::size_t threads = 0;
    /// Fill the elapsed column. Off by default: timings break byte-identical output.
    bool timing = false;
    bool early_return = true;

    void validate() const {
        if (reps < 1) throw ConfigError("--reps must be at least 1");
        if (sizes.empty()) throw ConfigError("--sizes needs at least one sample size");
        for (auto n_i : sizes)
            if (n_i < 1) throw ConfigError("sample sizes must be positive");
        if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("--alpha must lie in (0, 1)");
        if (methods.empty()) throw ConfigError("--methods needs at least one method");
        for (const auto& m : methods)
            if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
                throw ConfigError("unknown method '" + m + "'");
        if (latent_count && !latent_names.empty()) throw ConfigError("give latents as a count or as names, not both");
        if (pair && pair->first == pair->second) throw ConfigError("--pair needs two different variables");
        switch (source) {
            case SourceKind::Fixture:
                if (!is_builtin_fixture(fixture) && !benchmark_cap(fixture))
                    throw ConfigError("unknown fixture '" + fixture + "'");
                break;
            case SourceKind::Network:
                if (!benchmark_cap(fixture)) throw ConfigError("unknown benchmark network '" + fixture + "'");
                break;
            case SourceKind::Random:
                if (n.lo < 3) throw ConfigError("random graphs need --n of at least 3");
                if (!(degree > 0.0) || !(degree < static_cast<double>(n.lo)))
                    throw ConfigError("--degree must lie in (0, n)");
                if (pair) throw ConfigError("random graphs use the last two nodes in causal order as the pair");
                break;
            case SourceKind::GraphFile:
                if (graph_path.empty()) throw ConfigError("--graph needs a path");
                break;
            case SourceKind::Csv:
                if (csv_path.empty()) throw ConfigError("--csv needs a path");
                if (!pair) throw ConfigError("--csv needs --pair X,Y");
                for (const auto& m : methods)
                    if (is_oracle_method(m)) throw ConfigError("oracle methods need a graph, not a CSV");
                break;
        }
    }
};

/// Deterministic sub-seed for one named stream of the experiment.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::vector<std::uint32_t> words{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32)};
    for (auto p : path) {
        words.push_back(static_cast<std::uint32_t>(p));
        words.push_back(static_cast<std::uint32_t>(p >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

namespace stream {
inline constexpr std::uint64_t graph = 1, weights = 2, latents = 3, pair = 4, data = 5, shape = 6;
}

// ---------------------------------------------------------------------------
// Instances

/// A fully resolved causal structure: SCM over the complete DAG, the hidden
/// nodes, and the variables handed to the methods.
struct Instance {
    std::string label;
    LinearSCM scm;
    NodeSet latents;
    /// Measured nodes that descend from X or Y (other than Y); left out so the
    /// pretreatment assumption holds.
    NodeSet post_treatment;
    /// DAG ids of the variables the methods see, in DAG order.
    NodeSet observed;
    MixedGraph mag;
    NodePair pair_dag{0, 1};
    NodePair pair_obs{0, 1};
    double true_ce = 0.0;
    std::size_t cap = 0;
    bool unbounded_cap = false;
    std::map<std::string, std::uint64_t> seeds;

    const MixedGraph& dag() const { return scm.dag(); }
    std::vector<std::string> observed_names() const { return dag().names(observed); }
    std::optional<std::size_t> search_cap() const {
        return unbounded_cap ? std::nullopt : std::optional<std::size_t>(cap);
    }
};

namespace detail {

inline NodeId index_in(const NodeSet& set, NodeId v) {
    auto it = std::lower_bound(set.begin(), set.end(), v);
    if (it == set.end() || *it != v) throw ConfigError("variable is not observed");
    return static_cast<NodeId>(it - set.begin());
}

/// Uniform choice among ordered pairs (X, Y) of measured nodes where Y is
/// not an ancestor of X.
inline NodePair random_pair(const MixedGraph& dag, const NodeSet& exclude, std::uint64_t seed) {
    std::vector<std::pair<NodeId, NodeId>> pairs;
    for (NodeId x = 0; x < dag.size(); ++x) {
        if (contains(exclude, x)) continue;
        const NodeSet an_x = ancestors(dag, x);
        for (NodeId y = 0; y < dag.size(); ++y)
            if (y != x && !contains(exclude, y) && !contains(an_x, y)) pairs.emplace_back(x, y);
    }
    if (pairs.empty()) throw ConfigError("no admissible (treatment, outcome) pair");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
    const auto& p = pairs[pick(rng)];
    return NodePair(p.first, p.second);
}

inline std::size_t draw_in(const Range& r, std::uint64_t seed) {
    if (r.lo == r.hi) return r.lo;
    std::mt19937_64 rng(seed);
    return std::uniform_int_distribution<std::size_t>(r.lo, r.hi)(rng);
}

inline NodeSet names_to_ids(const MixedGraph& g, const std::vector<std::string>& names) {
    try {
        return g.node_set(names);
    } catch (const GraphError& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace detail

/// Builds instance `index` of the experiment. Random sources draw a fresh
/// graph per index; the others only redraw random latents and pairs.
inline Instance make_instance(const ExperimentConfig& cfg, std::size_t index = 0) {
    Instance inst;
    const std::uint64_t graph_seed = derive_seed(cfg.seed, {stream::graph, index});
    const std::uint64_t weight_seed = derive_seed(cfg.seed, {stream::weights, index});
    const std::uint64_t latent_seed = derive_seed(cfg.seed, {stream::latents, index});
    const std::uint64_t pair_seed = derive_seed(cfg.seed, {stream::pair, index});

    MixedGraph dag;
    NodeSet fixed_latents;
    std::optional<NodePair> pair;
    std::optional<LinearSCM> given_scm;
    std::size_t preset_cap = 0;
    bool unbounded = true;

    auto resolve_pair = [&](const MixedGraph& g) -> std::optional<NodePair> {
        if (!cfg.pair) return std::nullopt;
        try {
            return NodePair(g.index(cfg.pair->first), g.index(cfg.pair->second));
        } catch (const GraphError& e) {
            throw ConfigError(e.what());
        }
    };

    switch (cfg.source) {
        case SourceKind::Fixture:
        case SourceKind::Network: {
            if (is_builtin_fixture(cfg.fixture) && cfg.source == SourceKind::Fixture) {
                Fixture f = builtin_fixture(cfg.fixture);
                dag = f.dag;
                fixed_latents = f.latents;
                pair = resolve_pair(dag);
                if (!pair) pair = f.pair();
                preset_cap = f.cap;
                unbounded = false;
            } else {
                dag = load_benchmark_network(cfg.fixture);
                preset_cap = *benchmark_cap(cfg.fixture);
                unbounded = false;
            }
            inst.label = cfg.fixture;
            break;
        }
        case SourceKind::Random: {
            const std::size_t n = detail::draw_in(cfg.n, derive_seed(cfg.seed, {stream::shape, index, 0}));
            const std::size_t want = cfg.latent_count ? detail::draw_in(*cfg.latent_count,
                                                                        derive_seed(cfg.seed, {stream::shape, index, 1}))
                                                      : 0;
            // redraw until enough nodes can be hidden
            for (std::uint64_t attempt = 0;; ++attempt) {
                if (attempt == 1000) throw ConfigError("could not draw a graph with enough latent candidates");
                const std::uint64_t s = attempt ? derive_seed(graph_seed, {attempt}) : graph_seed;
                dag = random_dag(n, cfg.degree, s);
                pair = last_two_in_causal_order(dag);
                const auto pick = pick_latents(dag, want, latent_seed, make_set({pair->treatment, pair->outcome}));
                if (!pick.short_of_request) {
                    fixed_latents = pick.nodes;
                    inst.seeds["graph"] = s;
                    break;
                }
            }
            inst.label = "random(" + std::to_string(n) + "," + format_real(cfg.degree) + ")";
            break;
        }
        case SourceKind::GraphFile: {
            std::ifstream in(cfg.graph_path);
            if (!in) throw ConfigError("cannot open graph file '" + cfg.graph_path + "'");
            GraphDocument doc;
            if (cfg.graph_path.size() > 6 && cfg.graph_path.ends_with(".edges")) {
                doc.graph = parse_edge_list(in);
            } else {
                doc = parse_graph_document(in);
            }
            if (doc.graph.kind() == GraphKind::MAG) {
                auto [d, l] = canonical_dag(doc.graph);
                dag = std::move(d);
                fixed_latents = std::move(l);
            } else {
                dag = doc.graph;
                if (!doc.weights.empty()) {
                    std::vector<double> noise(dag.size(), 1.0);
                    for (const auto& [v, s] : doc.noise) noise[v] = s;
                    given_scm = LinearSCM(dag, doc.weights, noise);
                }
            }
            pair = resolve_pair(dag);
            inst.label = std::filesystem::path(cfg.graph_path).filename().string();
            break;
        }
        case SourceKind::Csv:
            throw ConfigError("CSV inputs carry no graph");
    }

    if (!cfg.latent_names.empty()) {
        fixed_latents = set_union(fixed_latents, detail::names_to_ids(dag, cfg.latent_names));
    }
    if (cfg.source != SourceKind::Random) {
        if (!pair) pair = detail::random_pair(dag, fixed_latents, pair_seed);
        if (cfg.latent_count) {
            const std::size_t want = detail::draw_in(*cfg.latent_count, derive_seed(cfg.seed, {stream::shape, index, 1}));
            const NodeSet excluded = set_union(fixed_latents, make_set({pair->treatment, pair->outcome}));
            const auto pick = pick_latents(dag, want, latent_seed, excluded);
            if (pick.short_of_request)
                throw ConfigError("infeasible latent request: fewer than " + std::to_string(want) +
                                  " nodes with two or more children");
            fixed_latents = set_union(fixed_latents, pick.nodes);
        }
    }
    if (contains(fixed_latents, pair->treatment) || contains(fixed_latents, pair->outcome))
        throw ConfigError("treatment and outcome cannot be latent");

    inst.latents = fixed_latents;
    NodeSet after = set_union(descendants(dag, pair->treatment), descendants(dag, pair->outcome));
    after = without(without(std::move(after), pair->treatment), pair->outcome);
    inst.post_treatment = set_difference(after, inst.latents);
    inst.observed = set_difference(set_difference(dag.all_nodes(), inst.latents), inst.post_treatment);

    inst.scm = given_scm ? std::move(*given_scm) : assign_weights(dag, weight_seed);
    inst.mag = latent_project(inst.scm.dag(), inst.observed);
    inst.pair_dag = *pair;
    inst.pair_obs = NodePair(detail::index_in(inst.observed, pair->treatment),
                             detail::index_in(inst.observed, pair->outcome));
    inst.true_ce = true_total_effect(inst.scm, inst.pair_dag);
    inst.cap = cfg.cap.value_or(preset_cap);
    inst.unbounded_cap = !cfg.cap && unbounded;
    if (!inst.seeds.count("graph")) inst.seeds["graph"] = graph_seed;
    inst.seeds["weights"] = given_scm ? 0 : weight_seed;
    inst.seeds["latents"] = latent_seed;
    inst.seeds["pair"] = pair_seed;
    return inst;
}

/// Seed of the dataset for (repetition, N).
inline std::uint64_t data_seed(const ExperimentConfig& cfg, std::size_t rep, std::size_t n) {
    return derive_seed(cfg.seed, {stream::data, rep, n});
}

/// Samples the full SCM and keeps the observed columns.
inline Dataset observed_sample(const Instance& inst, std::size_t n, std::uint64_t seed) {
    return sample(inst.scm, n, seed).select(inst.observed_names());
}

// ---------------------------------------------------------------------------
// Results

struct RunRecord {
    std::string method;
    std::size_t repetition = 0;
    std::size_t n = 0;
    std::string decision;
    double theta_hat = std::numeric_limits<double>::quiet_NaN();
    double true_ce = std::numeric_limits<double>::quiet_NaN();
    double re = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_tests = 0;
    std::optional<double> elapsed;
    std::string z;
    std::string s;
    std::uint64_t seed = 0;
    /// ok | oracle | no_effect | unknown | zero_ce | no_truth | error
    std::string status;
    std::string error;
    std::string dataset;
};

inline const std::vector<std::string>& results_header() {
    static const std::vector<std::string> h{"method", "repetition", "N",  "decision", "theta_hat",
                                            "true_ce", "re",        "n_tests", "elapsed", "Z",
                                            "S",      "seed",       "status", "error",   "dataset"};
    return h;
}

/// |(theta - ce) / ce| * 100.
inline double relative_error(double theta, double ce) { return std::abs((theta - ce) / ce) * 100.0; }

namespace detail {

inline std::string real_or_empty(double v) { return std::isfinite(v) ? format_real(v) : std::string(); }

inline std::string csv_safe(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

inline std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) out += (i ? ";" : "") + names[i];
    return out;
}

}  // namespace detail

inline void write_results(std::ostream& out, const std::vector<RunRecord>& rows) {
    const auto& h = results_header();
    for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
    out << '\n';
    for (const auto& r : rows) {
        out << r.method << ',' << r.repetition << ',' << r.n << ',' << r.decision << ','
            << detail::real_or_empty(r.theta_hat) << ',' << detail::real_or_empty(r.true_ce) << ','
            << detail::real_or_empty(r.re) << ',' << r.n_tests << ','
            << (r.elapsed ? format_real(*r.elapsed) : std::string()) << ',' << r.z << ',' << r.s << ','
            << r.seed << ',' << r.status << ',' << detail::csv_safe(r.error) << ',' << r.dataset << '\n';
    }
}

inline void sort_records(std::vector<RunRecord>& rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const RunRecord& a, const RunRecord& b) {
        return std::tie(a.method, a.repetition, a.n) < std::tie(b.method, b.repetition, b.n);
    });
}

/// Reads a results CSV written by write_results.
inline std::vector<RunRecord> read_results(std::istream& in, const std::string& origin = "results") {
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r') cells.back().pop_back();
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(origin + ": empty file");
    if (split(line) != results_header()) throw ConfigError(origin + ": unexpected results header");
    std::vector<RunRecord> rows;
    std::size_t line_no = 1;
    auto num = [&](const std::string& c) {
        if (c.empty()) return std::numeric_limits<double>::quiet_NaN();
        auto v = parse_real(c);
        if (!v) throw ConfigError(origin + " line " + std::to_string(line_no) + ": bad number '" + c + "'");
        return *v;
    };
    auto count = [&](const std::string& c) -> std::uint64_t {
        std::uint64_t v = 0;
        auto res = std::from_chars(c.data(), c.data() + c.size(), v);
        if (c.empty() || res.ec != std::errc() || res.ptr != c.data() + c.size())
            throw ConfigError(origin + " line " + std::to_string(line_no) + ": bad count '" + c + "'");
        return v;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto c = split(line);
        if (c.size() != results_header().size())
            throw ConfigError(origin + " line " + std::to_string(line_no) + ": wrong number of fields");
        RunRecord r;
        r.method = c[0];
        r.repetition = count(c[1]);
        r.n = count(c[2]);
        r.decision = c[3];
        r.theta_hat = num(c[4]);
        r.true_ce = num(c[5]);
        r.re = num(c[6]);
        r.n_tests = count(c[7]);
        if (!c[8].empty()) r.elapsed = num(c[8]);
        r.z = c[9];
        r.s = c[10];
        r.seed = count(c[11]);
        r.status = c[12];
        r.error = c[13];
        r.dataset = c[14];
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Hashing and small file helpers

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + p.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out || !(out << bytes)) throw std::runtime_error("cannot write '" + p.string() + "'");
}

/// Runs task(i) for i in [0, count) on `threads` workers.
template <class Task>
void parallel_for(std::size_t count, std::size_t threads, Task&& task) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(count, 1));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) task(i);
    };
    if (threads == 1) {
        worker();
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// generate

inline nlohmann::json instance_json(const Instance& inst) {
    const auto& g = inst.dag();
    nlohmann::json latents = nlohmann::json::array();
    for (NodeId v : inst.latents)
        latents.push_back({{"name", g.name(v)}, {"children", g.names(g.children(v))}});
    return {{"label", inst.label},
            {"treatment", g.name(inst.pair_dag.treatment)},
            {"outcome", g.name(inst.pair_dag.outcome)},
            {"latents", latents},
            {"post_treatment", g.names(inst.post_treatment)},
            {"observed", inst.observed_names()},
            {"true_ce", inst.true_ce},
            {"cap", inst.unbounded_cap ? nlohmann::json(nullptr) : nlohmann::json(inst.cap)},
            {"seeds", inst.seeds}};
}

struct GenerateResult {
    std::filesystem::path dir;
    std::vector<std::filesystem::path> files;
};

/// Writes graph.txt (full DAG), mag.txt (projection), scm.txt, one CSV of
/// observed columns per (repetition, N) under data/, and manifest.json.
inline GenerateResult cmd_generate(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.source == SourceKind::Csv) throw ConfigError("generate needs a graph source");
    const Instance inst = make_instance(cfg);
    const std::filesystem::path dir(cfg.out);
    std::filesystem::create_directories(dir / "data");
    GenerateResult res{dir, {}};

    write_file(dir / "graph.txt", to_text(inst.dag()));
    write_file(dir / "mag.txt", to_text(inst.mag));
    write_file(dir / "scm.txt", to_text(inst.scm));
    res.files = {dir / "graph.txt", dir / "mag.txt", dir / "scm.txt"};

    struct Job {
        std::size_t rep, n;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < cfg.reps; ++r)
        for (auto n : cfg.sizes) jobs.push_back({r, n});
    std::vector<nlohmann::json> entries(jobs.size());
    parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
        const auto [rep, n] = jobs[i];
        const std::uint64_t seed = data_seed(cfg, rep, n);
        std::ostringstream os;
        write_csv(os, observed_sample(inst, n, seed));
        const std::string rel = "data/rep" + std::to_string(rep) + "_n" + std::to_string(n) + ".csv";
        const std::string bytes = os.str();
        write_file(dir / rel, bytes);
        entries[i] = {{"path", rel}, {"repetition", rep}, {"N", n}, {"seed", seed}, {"sha256", sha256_hex(bytes)}};
    });
    for (const auto& e : entries) res.files.push_back(dir / e["path"].get<std::string>());

    nlohmann::json manifest = {
        {"seed", cfg.seed},
        {"alpha", cfg.alpha},
        {"sizes", cfg.sizes},
        {"reps", cfg.reps},
        {"instance", instance_json(inst)},
        {"files",
         {{"graph", {{"path", "graph.txt"}, {"sha256", sha256_hex(read_file(dir / "graph.txt"))}}},
          {"mag", {{"path", "mag.txt"}, {"sha256", sha256_hex(read_file(dir / "mag.txt"))}}},
          {"scm", {{"path", "scm.txt"}, {"sha256", sha256_hex(read_file(dir / "scm.txt"))}}}}},
        {"datasets", entries}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    res.files.push_back(dir / "manifest.json");
    return res;
}

/// Rebuilds the instance described by a generated directory.
inline Instance load_generated_instance(const std::filesystem::path& dir, nlohmann::json* manifest_out = nullptr) {
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(read_file(dir / "manifest.json"));
    } catch (const std::exception& e) {
        throw ConfigError("cannot read manifest in '" + dir.string() + "': " + e.what());
    }
    const auto& mi = m.at("instance");
    Instance inst;
    inst.scm = load_scm((dir / "scm.txt").string());
    const auto& g = inst.scm.dag();
    inst.label = mi.at("label").get<std::string>();
    std::vector<std::string> latent_names;
    for (const auto& l : mi.at("latents")) latent_names.push_back(l.at("name").get<std::string>());
    inst.latents = detail::names_to_ids(g, latent_names);
    inst.post_treatment = detail::names_to_ids(g, mi.at("post_treatment").get<std::vector<std::string>>());
    inst.observed = detail::names_to_ids(g, mi.at("observed").get<std::vector<std::string>>());
    inst.pair_dag = NodePair(g.index(mi.at("treatment").get<std::string>()), g.index(mi.at("outcome").get<std::string>()));
    inst.pair_obs = NodePair(detail::index_in(inst.observed, inst.pair_dag.treatment),
                             detail::index_in(inst.observed, inst.pair_dag.outcome));
    inst.mag = latent_project(g, inst.observed);
    inst.true_ce = true_total_effect(inst.scm, inst.pair_dag);
    if (mi.at("cap").is_null())
        inst.unbounded_cap = true;
    else
        inst.cap = mi.at("cap").get<std::size_t>();
    inst.seeds = mi.at("seeds").get<std::map<std::string, std::uint64_t>>();
    if (manifest_out) *manifest_out = std::move(m);
    return inst;
}

// ---------------------------------------------------------------------------
// run

namespace detail {

inline RunRecord fill_record(const std::string& method, const Decision& d, const SearchTrace& tr,
                             const std::vector<std::string>& names, double true_ce, bool with_data, bool timing) {
    RunRecord r;
    r.method = method;
    r.decision = to_string(kind_of(d));
    r.true_ce = true_ce;
    r.n_tests = tr.n_tests;
    if (timing) r.elapsed = std::chrono::duration<double>(tr.elapsed).count();
    if (const auto* e = std::get_if<Effect>(&d)) {
        std::vector<std::string> zn;
        for (NodeId v : e->z) zn.push_back(names[v]);
        r.z = join_names(zn);
        r.s = names[e->s];
        r.theta_hat = e->theta;
        if (!with_data)
            r.status = "oracle";
        else if (!std::isfinite(true_ce))
            r.status = "no_truth";
        else if (true_ce == 0.0)
            r.status = "zero_ce";
        else {
            r.re = relative_error(e->theta, true_ce);
            r.status = "ok";
        }
    } else {
        r.status = std::holds_alternative<NoEffect>(d) ? "no_effect" : "unknown";
    }
    return r;
}

inline std::pair<Decision, SearchTrace> run_method(const std::string& method, CITester& tester, const Dataset* data,
                                                   const NodePair& pair, const NodeSet& vars,
                                                   const SearchOptions& opt) {
    if (method == "lsas" || method == "oracle-lsas") return run_lsas(tester, data, pair, vars, opt);
    return run_ehs(tester, data, pair, vars, opt);
}

inline RunRecord error_record(const std::string& method, std::size_t rep, std::size_t n, std::uint64_t seed,
                              double true_ce, const std::string& what) {
    RunRecord r;
    r.method = method;
    r.repetition = rep;
    r.n = n;
    r.decision = "error";
    r.true_ce = true_ce;
    r.seed = seed;
    r.status = "error";
    r.error = what;
    return r;
}

}  // namespace detail

struct Aggregate {
    std::string method;
    std::size_t n = 0;
    std::size_t runs = 0, effect = 0, no_effect = 0, unknown = 0, errors = 0;
    double mean_re = std::numeric_limits<double>::quiet_NaN();
    double median_re = std::numeric_limits<double>::quiet_NaN();
    double mean_n_tests = std::numeric_limits<double>::quiet_NaN();
    double mean_theta = std::numeric_limits<double>::quiet_NaN();
};

/// Per (method, N): decision-kind counts, RE mean/median over rows with
/// status ok, mean n_tests over rows without errors, mean theta over effects.
inline std::vector<Aggregate> aggregate(const std::vector<RunRecord>& rows) {
    std::map<std::pair<std::string, std::size_t>, std::vector<const RunRecord*>> groups;
    for (const auto& r : rows) groups[{r.method, r.n}].push_back(&r);
    std::vector<Aggregate> out;
    for (const auto& [key, rs] : groups) {
        Aggregate a;
        a.method = key.first;
        a.n = key.second;
        a.runs = rs.size();
        std::vector<double> re, tests, theta;
        for (const auto* r : rs) {
            if (r->status == "error") {
                ++a.errors;
                continue;
            }
            if (r->decision == "effect") ++a.effect;
            if (r->decision == "no_effect") ++a.no_effect;
            if (r->decision == "unknown") ++a.unknown;
            tests.push_back(static_cast<double>(r->n_tests));
            if (r->status == "ok") re.push_back(r->re);
            if (std::isfinite(r->theta_hat)) theta.push_back(r->theta_hat);
        }
        auto mean = [](const std::vector<double>& v) {
            return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                             : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        };
        a.mean_re = mean(re);
        a.mean_n_tests = mean(tests);
        a.mean_theta = mean(theta);
        if (!re.empty()) {
            std::sort(re.begin(), re.end());
            const std::size_t m = re.size() / 2;
            a.median_re = re.size() % 2 ? re[m] : 0.5 * (re[m - 1] + re[m]);
        }
        out.push_back(std::move(a));
    }
    return out;
}

inline void write_summary(std::ostream& out, const std::vector<Aggregate>& aggs) {
    out << "method,N,runs,effect,no_effect,unknown,error,mean_re,median_re,mean_n_tests,mean_theta_hat\n";
    for (const auto& a : aggs)
        out << a.method << ',' << a.n << ',' << a.runs << ',' << a.effect << ',' << a.no_effect << ',' << a.unknown
            << ',' << a.errors << ',' << detail::real_or_empty(a.mean_re) << ',' << detail::real_or_empty(a.median_re)
            << ',' << detail::real_or_empty(a.mean_n_tests) << ',' << detail::real_or_empty(a.mean_theta) << '\n';
}

struct RunResult {
    std::vector<RunRecord> rows;
    std::vector<Aggregate> summary;
    std::size_t errors = 0;
    std::filesystem::path results_path;
};

namespace detail {

inline RunResult finish_run(const ExperimentConfig& cfg, std::vector<RunRecord> rows) {
    sort_records(rows);
    RunResult res;
    res.summary = aggregate(rows);
    for (const auto& r : rows) res.errors += r.status == "error";
    const std::filesystem::path dir(cfg.out);
    std::ostringstream rs, ss;
    write_results(rs, rows);
    write_summary(ss, res.summary);
    res.results_path = dir / "results.csv";
    write_file(res.results_path, rs.str());
    write_file(dir / "summary.csv", ss.str());
    res.rows = std::move(rows);
    return res;
}

inline RunResult run_csv(const ExperimentConfig& cfg) {
    Dataset data;
    try {
        data = load_csv(cfg.csv_path);
    } catch (const ScmError& e) {
        throw ConfigError(e.what());
    }
    if (!data.has_column(cfg.pair->first) || !data.has_column(cfg.pair->second))
        throw ConfigError("--pair names must be CSV columns");
    const NodePair pair(data.column_index(cfg.pair->first), data.column_index(cfg.pair->second));
    NodeSet vars(data.cols());
    std::iota(vars.begin(), vars.end(), NodeId{0});
    SearchOptions opt;
    opt.cap = cfg.cap;
    opt.early_return = cfg.early_return;
    std::vector<RunRecord> rows;
    for (const auto& m : cfg.methods) {
        try {
            FisherZTester tester(data, cfg.alpha);
            auto [d, tr] = run_method(m, tester, &data, pair, vars, opt);
            auto r = fill_record(m, d, tr, data.columns(), std::numeric_limits<double>::quiet_NaN(), true, cfg.timing);
            r.n = data.rows();
            r.seed = cfg.seed;
            r.dataset = cfg.csv_path;
            rows.push_back(std::move(r));
        } catch (const std::exception& e) {
            rows.push_back(error_record(m, 0, data.rows(), cfg.seed, std::numeric_limits<double>::quiet_NaN(), e.what()));
        }
    }
    return finish_run(cfg, std::move(rows));
}

}  // namespace detail

/// Runs every configured method. Oracle methods ignore the data, so they run
/// once and their row is repeated for each repetition with N = 0. Data
/// methods run on one dataset per (repetition, N), shared between methods.
/// Writes results.csv and summary.csv under cfg.out.
inline RunResult cmd_run(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.source == SourceKind::Csv) return detail::run_csv(cfg);

    std::optional<nlohmann::json> manifest;
    Instance inst;
    std::map<std::pair<std::size_t, std::size_t>, nlohmann::json> files;
    if (!cfg.input_dir.empty()) {
        manifest.emplace();
        inst = load_generated_instance(cfg.input_dir, &*manifest);
        for (const auto& e : manifest->at("datasets"))
            files[{e.at("repetition").get<std::size_t>(), e.at("N").get<std::size_t>()}] = e;
    } else {
        inst = make_instance(cfg);
    }
    const NodeSet vars = inst.mag.all_nodes();
    const auto names = inst.observed_names();
    SearchOptions opt;
    opt.cap = cfg.cap ? cfg.cap : inst.search_cap();
    opt.early_return = cfg.early_return;

    std::vector<RunRecord> rows;
    std::vector<std::string> data_methods;
    for (const auto& m : cfg.methods) {
        if (!is_oracle_method(m)) {
            data_methods.push_back(m);
            continue;
        }
        RunRecord base;
        try {
            OracleTester tester(inst.mag, cfg.alpha);
            auto [d, tr] = detail::run_method(m, tester, nullptr, inst.pair_obs, vars, opt);
            base = detail::fill_record(m, d, tr, names, inst.true_ce, false, cfg.timing);
            base.seed = cfg.seed;
        } catch (const std::exception& e) {
            base = detail::error_record(m, 0, 0, cfg.seed, inst.true_ce, e.what());
        }
        for (std::size_t rep = 0; rep < cfg.reps; ++rep) {
            rows.push_back(base);
            rows.back().repetition = rep;
        }
    }

    struct Job {
        std::size_t rep, n;
    };
    std::vector<Job> jobs;
    if (!data_methods.empty())
        for (std::size_t r = 0; r < cfg.reps; ++r)
            for (auto n : cfg.sizes) jobs.push_back({r, n});
    std::vector<std::vector<RunRecord>> out(jobs.size());
    parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
        const auto [rep, n] = jobs[i];
        std::uint64_t seed = data_seed(cfg, rep, n);
        std::string dataset;
        std::optional<Dataset> data;
        try {
            if (manifest) {
                auto it = files.find({rep, n});
                if (it == files.end())
                    throw std::runtime_error("no dataset for repetition " + std::to_string(rep) + " N " +
                                             std::to_string(n));
                dataset = it->second.at("path").get<std::string>();
                seed = it->second.at("seed").get<std::uint64_t>();
                const std::string bytes = read_file(std::filesystem::path(cfg.input_dir) / dataset);
                if (sha256_hex(bytes) != it->second.at("sha256").get<std::string>())
                    throw std::runtime_error("hash mismatch for " + dataset);
                std::istringstream is(bytes);
                data = read_csv(is);
                if (data->columns() != names) throw std::runtime_error(dataset + ": unexpected columns");
            } else {
                data = observed_sample(inst, n, seed);
            }
        } catch (const std::exception& e) {
            for (const auto& m : data_methods) {
                out[i].push_back(detail::error_record(m, rep, n, seed, inst.true_ce, e.what()));
                out[i].back().dataset = dataset;
            }
            return;
        }
        for (const auto& m : data_methods) {
            RunRecord r;
            try {
                FisherZTester tester(*data, cfg.alpha);
                auto [d, tr] = detail::run_method(m, tester, &*data, inst.pair_obs, vars, opt);
                r = detail::fill_record(m, d, tr, names, inst.true_ce, true, cfg.timing);
            } catch (const std::exception& e) {
                r = detail::error_record(m, rep, n, seed, inst.true_ce, e.what());
            }
            r.repetition = rep;
            r.n = n;
            r.seed = seed;
            r.dataset = dataset;
            out[i].push_back(std::move(r));
        }
    });
    for (auto& v : out)
        for (auto& r : v) rows.push_back(std::move(r));
    return detail::finish_run(cfg, std::move(rows));
}

// ---------------------------------------------------------------------------
// oracle-check

struct OracleCase {
    std::size_t instance = 0;
    std::string label;
    std::size_t observed = 0;
    std::size_t latents = 0;
    Decision lsas = Unknown{};
    Decision ehs = Unknown{};
    std::size_t lsas_tests = 0;
    std::size_t ehs_tests = 0;
    bool agree = false;
    /// Every Effect set passes the adjustment criterion on the projection.
    bool valid = true;
    /// NoEffect only when X is not an ancestor of Y.
    bool sound = true;
};

struct OracleReport {
    std::vector<OracleCase> cases;
    std::size_t agree = 0, disagree = 0, invalid = 0, unsound = 0, lsas_fewer_tests = 0;
    std::filesystem::path report_path;
};

/// Audits oracle-LSAS against oracle-EHS. Random sources contribute `reps`
/// independent graphs; other sources a single instance.
inline OracleReport cmd_oracle_check(const ExperimentConfig& cfg, bool write = true) {
    cfg.validate();
    if (cfg.source == SourceKind::Csv) throw ConfigError("oracle-check needs a graph source");
    const std::size_t count = cfg.source == SourceKind::Random ? cfg.reps : 1;
    OracleReport rep;
    rep.cases.resize(count);
    std::vector<std::string> names(count);
    parallel_for(count, cfg.threads, [&](std::size_t i) {
        const Instance inst = make_instance(cfg, i);
        OracleCase c;
        c.instance = i;
        c.label = inst.label;
        c.observed = inst.observed.size();
        c.latents = inst.latents.size();
        SearchOptions opt;
        opt.cap = cfg.cap ? cfg.cap : inst.search_cap();
        const NodeSet vars = inst.mag.all_nodes();
        OracleTester tl(inst.mag, cfg.alpha), te(inst.mag, cfg.alpha);
        auto [dl, trl] = run_lsas(tl, nullptr, inst.pair_obs, vars, opt);
        auto [de, tre] = run_ehs(te, nullptr, inst.pair_obs, vars, opt);
        c.lsas_tests = trl.n_tests;
        c.ehs_tests = tre.n_tests;
        c.agree = kind_of(dl) == kind_of(de);
        const bool causal = contains(ancestors(inst.mag, inst.pair_obs.outcome), inst.pair_obs.treatment);
        for (const Decision* d : {&dl, &de}) {
            if (const auto* e = std::get_if<Effect>(d))
                c.valid = c.valid && is_valid_adjustment(inst.mag, inst.pair_obs, e->z);
            if (std::holds_alternative<NoEffect>(*d)) c.sound = c.sound && !causal;
        }
        std::vector<std::string> zs;
        for (const Decision* d : {&dl, &de}) {
            const auto* e = std::get_if<Effect>(d);
            zs.push_back(e ? detail::join_names(inst.mag.names(e->z)) : std::string());
        }
        names[i] = zs[0] + "," + zs[1];
        c.lsas = std::move(dl);
        c.ehs = std::move(de);
        rep.cases[i] = std::move(c);
    });
    std::ostringstream os;
    os << "instance,label,observed,latents,lsas,ehs,agree,valid,sound,lsas_tests,ehs_tests,lsas_Z,ehs_Z\n";
    for (std::size_t i = 0; i < count; ++i) {
        const auto& c = rep.cases[i];
        rep.agree += c.agree;
        rep.disagree += !c.agree;
        rep.invalid += !c.valid;
        rep.unsound += !c.sound;
        rep.lsas_fewer_tests += c.lsas_tests < c.ehs_tests;
        os << c.instance << ',' << c.label << ',' << c.observed << ',' << c.latents << ','
           << to_string(kind_of(c.lsas)) << ',' << to_string(kind_of(c.ehs)) << ',' << c.agree << ',' << c.valid
           << ',' << c.sound << ',' << c.lsas_tests << ',' << c.ehs_tests << ',' << names[i] << '\n';
    }
    if (write) {
        rep.report_path = std::filesystem::path(cfg.out) / "oracle_check.csv";
        write_file(rep.report_path, os.str());
    }
    return rep;
}

// ---------------------------------------------------------------------------
// report

struct MetricRow {
    std::string method;
    std::size_t n = 0;
    double mean = 0.0;
    /// Sample standard deviation over sqrt(count); NaN with fewer than two values.
    double stderr_ = std::numeric_limits<double>::quiet_NaN();
    std::size_t count = 0;
};

inline MetricRow summarize(std::string method, std::size_t n, const std::vector<double>& v) {
    MetricRow m;
    m.method = std::move(method);
    m.n = n;
    m.count = v.size();
    m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() >= 2) {
        double ss = 0.0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        m.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    }
    return m;
}

/// Tidy tables keyed by metric name: re, n_tests, theta_hat.
inline std::map<std::string, std::vector<MetricRow>> metric_tables(const std::vector<RunRecord>& rows) {
    std::map<std::string, std::map<std::pair<std::string, std::size_t>, std::vector<double>>> raw;
    raw["re"];
    raw["n_tests"];
    raw["theta_hat"];
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.method, r.n);
        if (r.status == "error") continue;
        raw["n_tests"][key].push_back(static_cast<double>(r.n_tests));
        if (r.status == "ok") raw["re"][key].push_back(r.re);
        if (std::isfinite(r.theta_hat)) raw["theta_hat"][key].push_back(r.theta_hat);
    }
    std::map<std::string, std::vector<MetricRow>> out;
    for (const auto& [metric, groups] : raw) {
        auto& t = out[metric];
        for (const auto& [key, values] : groups) t.push_back(summarize(key.first, key.second, values));
    }
    return out;
}

struct ReportResult {
    std::map<std::string, std::vector<MetricRow>> tables;
    std::vector<std::filesystem::path> files;
};

/// Reads results CSVs and writes report_<metric>.csv tables plus
/// report_decisions.csv under `out_dir`.
inline ReportResult cmd_report(const std::vector<std::string>& inputs, const std::string& out_dir) {
    std::vector<RunRecord> rows;
    for (const auto& path : inputs) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open results file '" + path + "'");
        auto part = read_results(in, path);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    ReportResult res;
    res.tables = metric_tables(rows);
    const std::filesystem::path dir(out_dir);
    for (const auto& [metric, table] : res.tables) {
        std::ostringstream os;
        os << "method,N,mean,stderr\n";
        for (const auto& m : table)
            os << m.method << ',' << m.n << ',' << format_real(m.mean) << ',' << detail::real_or_empty(m.stderr_)
               << '\n';
        res.files.push_back(dir / ("report_" + metric + ".csv"));
        write_file(res.files.back(), os.str());
    }
    std::ostringstream ds;
    write_summary(ds, aggregate(rows));
    res.files.push_back(dir / "report_decisions.csv");
    write_file(res.files.back(), ds.str());
    return res;
}

}  // namespace lsas
