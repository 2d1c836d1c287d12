// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "nncov/attacks.hpp"
#include "nncov/coverage.hpp"
#include "nncov/formats.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace {

using namespace nncov;
namespace fs = std::filesystem;

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects the first few failure messages of one criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (ok) return;
        ++failures_;
        if (failures_ <= 5) messages_ << (failures_ > 1 ? "; " : "") << what;
    }
    Outcome outcome(const std::string& summary) const {
        if (failures_ == 0) return {true, summary};
        return {false, std::to_string(failures_) + " failure(s): " + messages_.str()};
    }

private:
    std::size_t failures_ = 0;
    std::ostringstream messages_;
};

CoverageState cover(const testing::Scenario& sc, std::size_t begin, std::size_t end) {
    CoverageState s(sc.model, sc.prof, sc.config);
    for (std::size_t i = begin; i < end; ++i) s.update(sc.suite[i]);
    return s;
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str();
    if (code != 0) std::cerr << "nncov " << args.front() << " exited " << code << ": " << e.str();
    return code;
}

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string operator/(const std::string& file) const { return (path_ / file).string(); }

private:
    fs::path path_;
};

// ---------------------------------------------------------------- oracle equivalence

Outcome oracle_equivalence() {
    Check c;
    const std::size_t triples = 60;
    std::size_t inputs = 0;
    for (std::uint64_t seed = 0; seed < triples; ++seed) {
        const auto sc = testing::random_scenario(1000 + seed, 300);
        inputs += sc.suite.size();
        const CoverageReport got = report(cover(sc, 0, sc.suite.size()));
        const CoverageCounts want = oracle::brute_force_counts(sc.prof, sc.config, sc.suite);
        c.expect(got.counts == want, "counts differ for seed " + std::to_string(1000 + seed));
        c.expect(got.tknp == want.patterns, "tknp differs for seed " + std::to_string(1000 + seed));
    }
    return c.outcome(std::to_string(triples) + " triples, " + std::to_string(inputs) + " inputs");
}

// ---------------------------------------------------------------- monoid laws

Outcome monoid_laws() {
    Check c;
    const std::size_t pairs = 120;
    for (std::uint64_t seed = 0; seed < pairs; ++seed) {
        const auto sc = testing::random_scenario(5000 + seed, 150);
        std::mt19937_64 rng(seed);
        const std::size_t cut = sc.suite.empty() ? 0 : rng() % (sc.suite.size() + 1);
        const CoverageState a = cover(sc, 0, cut);
        const CoverageState b = cover(sc, cut, sc.suite.size());
        const CoverageState empty(sc.model, sc.prof, sc.config);
        const std::string s = std::to_string(5000 + seed);
        c.expect(merge(empty, a) == a && merge(a, empty) == a, "identity fails for seed " + s);
        c.expect(merge(a, b) == merge(b, a), "commutativity fails for seed " + s);
        c.expect(merge(a, b) == cover(sc, 0, sc.suite.size()), "homomorphism fails for seed " + s);
    }

    TempDir dir("nncov_acceptance_ac2");
    bool ran = cli({"gen-data", "--n", "400", "--seed", "7", "--out", dir / "train.ds", "--test-out",
                    dir / "test.ds", "--test-count", "100"}) == 0 &&
               cli({"train", "--data", dir / "train.ds", "--out", dir / "model.json", "--epochs", "5"}) == 0 &&
               cli({"profile", "--model", dir / "model.json", "--data", dir / "train.ds", "--out",
                    dir / "profile.json"}) == 0;
    for (const char* shards : {"1", "4"}) {
        ran = ran && cli({"cover", "--model", dir / "model.json", "--profile", dir / "profile.json", "--data",
                          dir / "test.ds", "--shards", shards, "--out", dir / (std::string("r") + shards),
                          "--state-out", dir / (std::string("s") + shards)}) == 0;
    }
    c.expect(ran, "cover pipeline failed");
    if (ran) {
        c.expect(read_file(dir / "r1") == read_file(dir / "r4"), "--shards 1 and 4 reports differ");
        c.expect(read_file(dir / "s1") == read_file(dir / "s4"), "--shards 1 and 4 states differ");
    }
    return c.outcome(std::to_string(pairs) + " state pairs, shards 1 vs 4 byte-identical");
}

// ---------------------------------------------------------------- gradient correctness

Outcome gradient_correctness() {
    Check c;
    const std::size_t models = 40;
    double worst = 0;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < models; ++seed) {
        const auto r = oracle::gradient_trial(9000 + seed);
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
        c.expect(r.max_rel_error <= 1e-4, "seed " + std::to_string(9000 + seed) + " relative error " +
                                              std::to_string(r.max_rel_error));
    }
    std::ostringstream s;
    s << models << " models, " << checked << " partials, max relative error " << std::scientific
      << std::setprecision(2) << worst;
    return c.outcome(s.str());
}

// ---------------------------------------------------------------- zero on training

Outcome zero_on_training() {
    Check c;
    const std::size_t runs = 20;
    for (std::uint64_t seed = 0; seed < runs; ++seed) {
        std::mt19937_64 rng(seed);
        const auto hidden = 3 + rng() % 14;
        const Activation act = seed % 2 ? Activation::sigmoid : Activation::relu;
        const Model m = testing::random_model(rng, {2, hidden, hidden, 2}, {act, act, Activation::identity});
        const Dataset train = testing::random_dataset(rng, 1 + rng() % 200, 2, 2);
        CoverageState s(m, profile(m, train, 1 + seed % 4), {});
        for (std::size_t i = 0; i < train.size(); ++i) s.update(forward(m, train.input(i)).trace);
        const auto r = report(s);
        const std::string tag = " (seed " + std::to_string(seed) + ")";
        c.expect(r.nbc == 0.0 && r.snac == 0.0, "corner coverage on the profiling suite" + tag);
        c.expect(r.kmnc > 0.0, "KMNC is zero" + tag);
        for (double v : {r.kmnc, r.nbc, r.snac, r.tknc, r.nc}) c.expect(v >= 0.0 && v <= 1.0, "ratio out of range" + tag);
    }

    TempDir dir("nncov_acceptance_ac4");
    std::string summary;
    const bool ran = cli({"gen-data", "--kind", "moons", "--n", "300", "--seed", "2", "--out", dir / "d.ds"}) == 0 &&
                     cli({"train", "--data", dir / "d.ds", "--out", dir / "m.json", "--epochs", "5"}) == 0 &&
                     cli({"profile", "--model", dir / "m.json", "--data", dir / "d.ds", "--out", dir / "p.json"}) == 0 &&
                     cli({"cover", "--model", dir / "m.json", "--profile", dir / "p.json", "--data", dir / "d.ds",
                          "--out", dir / "r.json"},
                         &summary) == 0;
    c.expect(ran, "CLI pipeline failed");
    c.expect(summary.find("NBC\t0.0000\n") != std::string::npos &&
                 summary.find("SNAC\t0.0000\n") != std::string::npos,
             "CLI summary shows corner coverage");
    return c.outcome(std::to_string(runs) + " random models plus the CLI pipeline");
}

// ---------------------------------------------------------------- adversarial coverage increase

Outcome adversarial_coverage_increase() {
    Check c;
    TempDir dir("nncov_acceptance_ac5");
    bool ok = cli({"gen-data", "--kind", "blobs", "--n", "400", "--seed", "7", "--out", dir / "train.ds",
                   "--test-out", dir / "test.ds", "--test-count", "100"}) == 0 &&
              cli({"train", "--data", dir / "train.ds", "--out", dir / "model.json", "--hidden", "16,16",
                   "--activation", "relu"}) == 0 &&
              cli({"profile", "--model", dir / "model.json", "--data", dir / "train.ds", "--out",
                   dir / "profile.json"}) == 0 &&
              cli({"attack", "--model", dir / "model.json", "--data", dir / "test.ds", "--out", dir / "fgsm.ds",
                   "--method", "fgsm", "--epsilon", "0.3"}) == 0 &&
              cli({"attack", "--model", dir / "model.json", "--data", dir / "test.ds", "--out", dir / "bim.ds",
                   "--method", "bim", "--epsilon", "0.3", "--alpha", "0.05", "--iterations", "10"}) == 0;
    auto cover_cmd = [&](const std::vector<std::string>& data, const std::string& out) {
        std::vector<std::string> args{"cover", "--model", dir / "model.json", "--profile", dir / "profile.json",
                                      "--out", out};
        for (const auto& d : data) args.insert(args.end(), {"--data", d});
        return cli(args) == 0;
    };
    ok = ok && cover_cmd({dir / "test.ds"}, dir / "clean.json") &&
         cover_cmd({dir / "test.ds", dir / "fgsm.ds"}, dir / "clean_fgsm.json") &&
         cover_cmd({dir / "test.ds", dir / "bim.ds"}, dir / "clean_bim.json");
    std::string diff_out;
    ok = ok && cli({"diff", "--base", dir / "clean.json", "--extended", dir / "clean_bim.json"}, &diff_out) == 0;
    c.expect(ok, "CLI pipeline failed");
    if (!ok) return c.outcome("");

    const Model model = parse_model(read_file(dir / "model.json"));
    const double train_acc = evaluate(model, parse_dataset(read_file(dir / "train.ds"))).accuracy;
    const double clean = evaluate(model, parse_dataset(read_file(dir / "test.ds"))).accuracy;
    const double fgsm_acc = evaluate(model, parse_dataset(read_file(dir / "fgsm.ds"))).accuracy;
    const double bim_acc = evaluate(model, parse_dataset(read_file(dir / "bim.ds"))).accuracy;
    c.expect(train_acc >= 0.95, "train accuracy " + std::to_string(train_acc) + " below 0.95");
    c.expect(fgsm_acc < clean, "FGSM accuracy not below clean");
    c.expect(bim_acc < clean, "BIM accuracy not below clean");

    const auto base = parse_report(read_file(dir / "clean.json"));
    bool corners_grew = false;
    std::ostringstream deltas;
    deltas << std::fixed << std::setprecision(4);
    for (const auto& [name, file] : {std::pair<std::string, std::string>{"fgsm", "clean_fgsm.json"},
                                     {"bim", "clean_bim.json"}}) {
        const auto d = diff(base, parse_report(read_file(dir / file)));
        corners_grew = corners_grew || (d.nbc > 0 && d.snac > 0);
        c.expect(d.kmnc >= 0 && d.nbc >= 0 && d.snac >= 0 && d.tknc >= 0 && d.nc >= 0 && d.tknp >= 0,
                 name + ": a criterion decreased");
        deltas << "; " << name << " dNBC " << std::showpos << d.nbc << " dSNAC " << d.snac << " dKMNC " << d.kmnc
               << std::noshowpos;
    }
    c.expect(corners_grew, "neither attack raised both NBC and SNAC");
    c.expect(diff_out.find("NBC\t") != std::string::npos, "diff output lacks the NBC row");
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << "train acc " << train_acc << ", clean " << clean << ", fgsm "
      << fgsm_acc << ", bim " << bim_acc << deltas.str();
    return c.outcome(s.str());
}

// ---------------------------------------------------------------- format robustness

const float kEdge[] = {0.0f,
                       -0.0f,
                       std::numeric_limits<float>::denorm_min(),
                       -std::numeric_limits<float>::denorm_min(),
                       std::numeric_limits<float>::min(),
                       std::numeric_limits<float>::max(),
                       -std::numeric_limits<float>::max(),
                       std::numeric_limits<float>::epsilon(),
                       0.1f,
                       -1.0f / 3.0f};

float edgy(std::mt19937_64& rng) {
    if (rng() % 3 == 0) return kEdge[rng() % std::size(kEdge)];
    return std::uniform_real_distribution<float>(-10, 10)(rng);
}

bool same_bits(float a, float b) { return std::memcmp(&a, &b, sizeof a) == 0; }

template <typename M>
bool same_bits(const M& a, const M& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

Dataset random_dataset(std::mt19937_64& rng) {
    const std::size_t n = rng() % 20, width = 1 + rng() % 6;
    Dataset ds = testing::random_dataset(rng, n, width, 1 + rng() % 5);
    for (Eigen::Index i = 0; i < ds.inputs.size(); ++i) ds.inputs.data()[i] = edgy(rng);
    if (rng() % 2) {
        for (auto& id : ds.input_ids) id = "id-" + std::to_string(rng() % 1000) + "\xc3\xa9";
    }
    ds.provenance = "random \"quoted\" \\ provenance";
    return ds;
}

Model random_model(std::mt19937_64& rng) {
    std::vector<std::size_t> sizes{1 + rng() % 5};
    std::vector<Activation> acts;
    const auto depth = 1 + rng() % 3;
    for (std::size_t i = 0; i < depth; ++i) {
        sizes.push_back(1 + rng() % 6);
        acts.push_back(static_cast<Activation>(rng() % 3));
    }
    Model m = testing::random_model(rng, sizes, acts);
    std::vector<DenseLayer<float>> layers = m.layers();
    for (auto& l : layers) {
        for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = edgy(rng);
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = edgy(rng);
    }
    return Model(std::move(layers));
}

NeuronProfile random_profile(std::mt19937_64& rng) {
    NeuronProfile p;
    p.model_id = rng();
    p.sample_count = rng() % 1000;
    const auto depth = 1 + rng() % 3;
    const bool stats = rng() % 2;
    for (std::size_t l = 0; l < depth; ++l) {
        std::vector<NeuronBounds> layer;
        std::vector<NeuronStats> st;
        for (std::size_t i = 0, w = 1 + rng() % 6; i < w; ++i) {
            float a = edgy(rng), b = edgy(rng);
            if (b < a) std::swap(a, b);
            layer.push_back({a, b});
            st.push_back({edgy(rng), std::abs(edgy(rng))});
        }
        p.layers.push_back(std::move(layer));
        if (stats) p.stats.push_back(std::move(st));
    }
    return p;
}

bool same_profile(const NeuronProfile& a, const NeuronProfile& b) {
    if (a.model_id != b.model_id || a.sample_count != b.sample_count || a.layers.size() != b.layers.size() ||
        a.stats.size() != b.stats.size()) {
        return false;
    }
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (a.layers[l].size() != b.layers[l].size()) return false;
        for (std::size_t i = 0; i < a.layers[l].size(); ++i) {
            if (!same_bits(a.layers[l][i].low, b.layers[l][i].low) ||
                !same_bits(a.layers[l][i].high, b.layers[l][i].high)) {
                return false;
            }
            if (!a.stats.empty() && (!same_bits(a.stats[l][i].mean, b.stats[l][i].mean) ||
                                     !same_bits(a.stats[l][i].stddev, b.stats[l][i].stddev))) {
                return false;
            }
        }
    }
    return true;
}

struct Format {
    std::string name;
    bool binary;
    std::string bytes;
    // Parses and re-serializes; throws on rejection.
    std::function<std::string(std::string_view)> reserialize;
};

std::vector<Format> sample_formats(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto sc = testing::random_scenario(seed, 40);
    const CoverageState state = cover(sc, 0, sc.suite.size());
    const TraceHeader h{model_id(sc.model), sc.model.layer_sizes(), sc.suite.size()};
    return {
        {"dataset", true, serialize_dataset(random_dataset(rng)),
         [](std::string_view s) { return serialize_dataset(parse_dataset(s)); }},
        {"model", false, serialize_model(random_model(rng)),
         [](std::string_view s) { return serialize_model(parse_model(s)); }},
        {"profile", false, serialize_profile(random_profile(rng)),
         [](std::string_view s) { return serialize_profile(parse_profile(s)); }},
        {"report", false, serialize_report(report(state)),
         [](std::string_view s) { return serialize_report(parse_report(s)); }},
        {"state", true, serialize_state(state),
         [](std::string_view s) { return serialize_state(parse_state(s)); }},
        {"traces", true, serialize_traces(h, sc.suite),
         [](std::string_view s) {
             TraceHeader header;
             const auto t = parse_traces(s, &header);
             return serialize_traces(header, t);
         }},
    };
}

Outcome format_robustness() {
    Check c;
    std::size_t round_trips = 0, corruptions = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        std::mt19937_64 rng(seed);
        const std::string tag = " (seed " + std::to_string(seed) + ")";

        // Value-exact round trips, checked on the decoded values themselves.
        const Dataset ds = random_dataset(rng);
        const Dataset ds2 = parse_dataset(serialize_dataset(ds));
        c.expect(ds2 == ds && same_bits(ds2.inputs, ds.inputs), "dataset round trip" + tag);
        const Model m = random_model(rng);
        const Model m2 = parse_model(serialize_model(m));
        bool model_ok = m2.num_layers() == m.num_layers() && model_id(m2) == model_id(m);
        for (std::size_t l = 0; model_ok && l < m.num_layers(); ++l) {
            model_ok = same_bits(m.layer(l).weights, m2.layer(l).weights) &&
                       same_bits(m.layer(l).bias, m2.layer(l).bias) &&
                       m.layer(l).activation == m2.layer(l).activation;
        }
        c.expect(model_ok, "model round trip" + tag);
        const NeuronProfile p = random_profile(rng);
        c.expect(same_profile(parse_profile(serialize_profile(p)), p), "profile round trip" + tag);
        const auto sc = testing::random_scenario(seed, 60);
        const CoverageState st = cover(sc, 0, sc.suite.size());
        c.expect(parse_state(serialize_state(st)) == st, "state round trip" + tag);
        c.expect(parse_report(serialize_report(report(st))) == report(st), "report round trip" + tag);
        TraceHeader th;
        const auto traces = parse_traces(
            serialize_traces({model_id(sc.model), sc.model.layer_sizes(), sc.suite.size()}, sc.suite), &th);
        bool traces_ok = traces == sc.suite && th.count == sc.suite.size();
        for (std::size_t i = 0; traces_ok && i < traces.size(); ++i) {
            for (std::size_t l = 0; l < traces[i].layers.size(); ++l) {
                for (std::size_t k = 0; k < traces[i].layers[l].size(); ++k) {
                    traces_ok = traces_ok && same_bits(traces[i].layers[l][k], sc.suite[i].layers[l][k]);
                }
            }
        }
        c.expect(traces_ok, "trace round trip" + tag);
        round_trips += 6;

        for (const auto& f : sample_formats(seed)) {
            const std::string where = f.name + tag;
            c.expect(f.reserialize(f.bytes) == f.bytes, where + ": reserialization differs");
            // Every proper prefix is a truncation.
            const std::size_t step = std::max<std::size_t>(1, f.bytes.size() / 200);
            for (std::size_t n = 0; n < f.bytes.size(); n += step) {
                // A text prefix that only drops trailing whitespace is still the whole document.
                if (!f.binary && f.bytes.find_first_not_of(" \n", n) == std::string::npos) continue;
                ++corruptions;
                try {
                    f.reserialize(std::string_view(f.bytes).substr(0, n));
                    c.expect(false, where + ": prefix " + std::to_string(n) + " accepted");
                } catch (const FormatError&) {
                } catch (const std::exception& e) {
                    c.expect(false, where + ": prefix " + std::to_string(n) + " raised " + e.what());
                }
            }
            if (f.binary) {
                std::string bad = f.bytes;
                bad[1] ^= 0x20;
                try {
                    f.reserialize(bad);
                    c.expect(false, where + ": bad magic accepted");
                } catch (const BadMagicError&) {
                } catch (const std::exception& e) {
                    c.expect(false, where + ": bad magic raised " + e.what());
                }
                std::string future = f.bytes;
                future[4] = 7;
                try {
                    f.reserialize(future);
                    c.expect(false, where + ": future version accepted");
                } catch (const VersionError&) {
                } catch (const std::exception& e) {
                    c.expect(false, where + ": future version raised " + e.what());
                }
                corruptions += 2;
            }
            // Random byte damage: either a named error, or a read that is
            // faithful to the damaged bytes.
            for (int trial = 0; trial < 100; ++trial) {
                std::string damaged = f.bytes;
                for (int k = 0, flips = 1 + trial % 4; k < flips; ++k) {
                    damaged[rng() % damaged.size()] = static_cast<char>(rng() & 0xff);
                }
                ++corruptions;
                try {
                    const std::string again = f.reserialize(damaged);
                    if (f.binary) {
                        c.expect(again == damaged, where + ": damaged bytes read back differently");
                    } else {
                        c.expect(f.reserialize(again) == again, where + ": damaged text is not stable");
                    }
                } catch (const Error&) {
                } catch (const std::exception& e) {
                    c.expect(false, where + ": damage raised a foreign exception " + e.what());
                }
            }
        }
    }
    return c.outcome(std::to_string(round_trips) + " round trips, " + std::to_string(corruptions) +
                     " corrupted inputs");
}

}  // namespace

int main() {
    struct Criterion {
        const char* id;
        const char* title;
        Outcome (*run)();
    };
    const Criterion criteria[] = {
        {"AC-1", "oracle equivalence", oracle_equivalence},
        {"AC-2", "monoid laws", monoid_laws},
        {"AC-3", "gradient correctness", gradient_correctness},
        {"AC-4", "zero on training", zero_on_training},
        {"AC-5", "adversarial coverage increase", adversarial_coverage_increase},
        {"AC-6", "format robustness", format_robustness},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = cr.run();
        } catch (const std::exception& e) {
            o = {false, std::string("uncaught exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << cr.id << " " << cr.title << ": " << o.detail << " ["
                  << std::fixed << std::setprecision(2) << secs << " s]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
