#include "commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "nncov/attacks.hpp"
#include "nncov/coverage.hpp"
#include "nncov/formats.hpp"
#include "nncov/hash.hpp"
#include "nncov/network.hpp"
#include "nncov/profiler.hpp"

namespace nncov::cli {

namespace {

namespace fs = std::filesystem;

// Output paths must point into an existing directory.
const auto kWritablePath = CLI::Validator(
    [](std::string& path) -> std::string {
        const fs::path parent = fs::absolute(fs::path(path)).parent_path();
        if (!fs::is_directory(parent)) return "directory does not exist: " + parent.string();
        if (fs::is_directory(path)) return "output path is a directory: " + path;
        return {};
    },
    "WRITABLE");

std::string fixed4(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
}

std::string signed4(double v) {
    std::ostringstream s;
    s << std::showpos << std::fixed << std::setprecision(4) << v;
    return s.str();
}

Dataset load_datasets(const std::vector<std::string>& paths) {
    Dataset all = parse_dataset(read_file(paths.at(0)));
    for (std::size_t i = 1; i < paths.size(); ++i) all = concat(all, parse_dataset(read_file(paths[i])));
    return all;
}

void print_summary(std::ostream& out, const CoverageReport& r) {
    out << "KMNC\t" << fixed4(r.kmnc) << "\n";
    out << "NBC\t" << fixed4(r.nbc) << "\n";
    out << "SNAC\t" << fixed4(r.snac) << "\n";
    out << "TKNC\t" << fixed4(r.tknc) << "\n";
    out << "TKNP\t" << r.tknp << "\n";
    out << "NC\t" << fixed4(r.nc) << "\n";
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::string kind = "blobs";
    std::size_t n = 400;
    std::uint64_t seed = 7;
    std::string out;
    std::string test_out;
    std::size_t test_count = 0;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
    const auto kind = a.kind == "moons" ? SyntheticKind::moons : SyntheticKind::blobs;
    Dataset ds = make_synthetic_dataset(kind, a.n, a.seed);
    if (!a.test_out.empty()) {
        if (a.test_count == 0 || a.test_count >= ds.size()) {
            throw ArgumentError("--test-count must be between 1 and n-1");
        }
        const std::size_t cut = ds.size() - a.test_count;
        Dataset test = slice(ds, cut, ds.size());
        ds = slice(ds, 0, cut);
        ds.provenance += ":train";
        test.provenance += ":test";
        write_file_atomic(a.test_out, serialize_dataset(test));
        out << "wrote " << test.size() << " test examples to " << a.test_out << "\n";
    }
    write_file_atomic(a.out, serialize_dataset(ds));
    out << "wrote " << ds.size() << " examples to " << a.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string out;
    std::string init;
    std::vector<std::size_t> hidden{16, 16};
    std::string activation = "relu";
    std::uint64_t init_seed = 1;
    TrainOptions options;
};

int train(const TrainArgs& a, std::ostream& out) {
    const Dataset data = parse_dataset(read_file(a.data));
    Model model;
    if (!a.init.empty()) {
        model = parse_model(read_file(a.init));
    } else {
        std::vector<std::size_t> sizes{data.input_size};
        sizes.insert(sizes.end(), a.hidden.begin(), a.hidden.end());
        sizes.push_back(data.num_classes);
        model = init_model(sizes, parse_activation(a.activation), Activation::identity, a.init_seed);
    }
    const TrainResult result = train_sgd(model, data, a.options);
    write_file_atomic(a.out, serialize_model(result.model));
    out << "initial_loss\t" << fixed4(result.initial_loss) << "\n";
    out << "final_loss\t"
        << fixed4(result.epoch_loss.empty() ? result.initial_loss : result.epoch_loss.back()) << "\n";
    out << "train_accuracy\t" << fixed4(result.train_accuracy) << "\n";
    out << "model_id\t" << to_hex(model_id(result.model)) << "\n";
    return kOk;
}

// ---------------------------------------------------------------- profile

struct ProfileArgs {
    std::string model;
    std::string data;
    std::string out;
    std::size_t workers = 1;
};

int profile_cmd(const ProfileArgs& a, std::ostream& out) {
    const Model model = parse_model(read_file(a.model));
    const Dataset data = parse_dataset(read_file(a.data));
    const NeuronProfile p = profile(model, data, a.workers);
    write_file_atomic(a.out, serialize_profile(p));
    out << "profiled " << p.num_neurons() << " neurons over " << p.sample_count << " inputs\n";
    return kOk;
}

// ---------------------------------------------------------------- cover

struct CoverArgs {
    std::string model;
    std::string profile;
    std::vector<std::string> data;
    std::string trace_in;
    std::string trace_out;
    std::string state_out;
    std::string out;
    CoverageConfig config;
    std::size_t shards = 1;
};

// Accumulates `traces` into `shards` independent states over contiguous
// chunks, then merges them in chunk order.
CoverageState cover_sharded(const CoverageState& empty, const std::vector<ActivationTrace>& traces,
                            std::size_t shards) {
    shards = std::max<std::size_t>(1, std::min(shards, std::max<std::size_t>(1, traces.size())));
    std::vector<CoverageState> parts(shards, empty);
    auto work = [&](std::size_t s) {
        const std::size_t begin = traces.size() * s / shards;
        const std::size_t end = traces.size() * (s + 1) / shards;
        for (std::size_t i = begin; i < end; ++i) parts[s].update(traces[i]);
    };
    if (shards == 1) {
        work(0);
    } else {
        std::vector<std::exception_ptr> errors(shards);
        {
            std::vector<std::jthread> threads;
            for (std::size_t s = 0; s < shards; ++s) {
                threads.emplace_back([&, s] {
                    try {
                        work(s);
                    } catch (...) {
                        errors[s] = std::current_exception();
                    }
                });
            }
        }
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    CoverageState total = empty;
    for (const auto& p : parts) total.merge(p);
    return total;
}

int cover(const CoverArgs& a, std::ostream& out) {
    const Model model = parse_model(read_file(a.model));
    NeuronProfile prof = parse_profile(read_file(a.profile));
    const auto id = model_id(model);
    if (prof.model_id != id) {
        throw BindingError("profile " + a.profile + " was built from model " + to_hex(prof.model_id) +
                           " but --model has id " + to_hex(id));
    }
    const CoverageState empty(model, std::move(prof), a.config);

    std::vector<ActivationTrace> traces;
    if (!a.trace_in.empty()) {
        std::ifstream in(a.trace_in, std::ios::binary);
        if (!in) throw Error("cannot open '" + a.trace_in + "'");
        TraceReader reader(in);
        if (reader.header().model_id != id) {
            throw BindingError("trace stream " + a.trace_in + " is bound to model " +
                               to_hex(reader.header().model_id) + " but --model has id " + to_hex(id));
        }
        if (reader.header().layer_sizes != model.layer_sizes()) {
            throw BindingError("trace stream layer sizes do not match the model");
        }
        while (auto t = reader.next()) traces.push_back(std::move(*t));
    } else {
        const Dataset data = load_datasets(a.data);
        traces.reserve(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            traces.push_back(forward(model, data.input(i), data.input_ids[i]).trace);
        }
    }

    const CoverageState state = cover_sharded(empty, traces, a.shards);
    const CoverageReport r = report(state);

    if (!a.trace_out.empty()) {
        const TraceHeader header{id, model.layer_sizes(), traces.size()};
        write_file_atomic(a.trace_out, serialize_traces(header, traces));
    }
    if (!a.state_out.empty()) write_file_atomic(a.state_out, serialize_state(state));
    write_file_atomic(a.out, serialize_report(r));
    print_summary(out, r);
    return kOk;
}

// ---------------------------------------------------------------- attack

struct AttackArgs {
    std::string model;
    std::string data;
    std::string out;
    std::string method = "fgsm";
    AttackConfig config;
};

int attack(const AttackArgs& a, std::ostream& out) {
    const Model model = parse_model(read_file(a.model));
    const Dataset data = parse_dataset(read_file(a.data));
    const AttackMethod method = parse_attack_method(a.method);
    const Dataset adv = attack_suite(model, data, method, a.config);
    write_file_atomic(a.out, serialize_dataset(adv));
    out << "clean_accuracy\t" << fixed4(evaluate(model, data).accuracy) << "\n";
    out << "adversarial_accuracy\t" << fixed4(evaluate(model, adv).accuracy) << "\n";
    return kOk;
}

// ---------------------------------------------------------------- diff

int diff_cmd(const std::string& base_path, const std::string& ext_path, std::ostream& out) {
    const CoverageReport base = parse_report(read_file(base_path));
    const CoverageReport ext = parse_report(read_file(ext_path));
    const CoverageDelta d = diff(base, ext);
    out << "criterion\tbase\textended\tdelta\n";
    out << "KMNC\t" << fixed4(base.kmnc) << "\t" << fixed4(ext.kmnc) << "\t" << signed4(d.kmnc) << "\n";
    out << "NBC\t" << fixed4(base.nbc) << "\t" << fixed4(ext.nbc) << "\t" << signed4(d.nbc) << "\n";
    out << "SNAC\t" << fixed4(base.snac) << "\t" << fixed4(ext.snac) << "\t" << signed4(d.snac) << "\n";
    out << "TKNC\t" << fixed4(base.tknc) << "\t" << fixed4(ext.tknc) << "\t" << signed4(d.tknc) << "\n";
    out << "TKNP\t" << base.tknp << "\t" << ext.tknp << "\t" << std::showpos << d.tknp
        << std::noshowpos << "\n";
    out << "NC\t" << fixed4(base.nc) << "\t" << fixed4(ext.nc) << "\t" << signed4(d.nc) << "\n";
    return kOk;
}

// ---------------------------------------------------------------- inspect

int inspect(const std::string& path, std::ostream& out) {
    const std::string bytes = read_file(path);
    const std::string_view magic = std::string_view(bytes).substr(0, 4);
    if (magic == "DGDS") {
        const Dataset ds = parse_dataset(bytes);
        out << "dataset\n  count\t" << ds.size() << "\n  input_size\t" << ds.input_size
            << "\n  num_classes\t" << ds.num_classes << "\n  provenance\t" << ds.provenance << "\n";
        std::vector<std::size_t> per_class(ds.num_classes, 0);
        for (auto l : ds.labels) ++per_class[l];
        for (std::size_t c = 0; c < per_class.size(); ++c) {
            out << "  class " << c << "\t" << per_class[c] << "\n";
        }
        return kOk;
    }
    if (magic == "DGTR") {
        TraceHeader h;
        const auto traces = parse_traces(bytes, &h);
        out << "trace stream\n  model_id\t" << to_hex(h.model_id) << "\n  records\t" << traces.size()
            << "\n  layer_sizes\t";
        for (std::size_t i = 0; i < h.layer_sizes.size(); ++i) {
            out << (i ? "," : "") << h.layer_sizes[i];
        }
        out << "\n";
        return kOk;
    }
    if (magic == "DGCS") {
        const CoverageState s = parse_state(bytes);
        out << "coverage state\n  model_id\t" << to_hex(s.model_id()) << "\n  profile_hash\t"
            << to_hex(s.profile_hash()) << "\n  inputs_seen\t" << s.inputs_seen() << "\n";
        print_summary(out, report(s));
        return kOk;
    }
    // JSON artifacts: dispatch on the format tag.
    if (bytes.find("\"nncov-model\"") != std::string::npos) {
        const Model m = parse_model(bytes);
        out << "model\n  model_id\t" << to_hex(model_id(m)) << "\n  input_size\t" << m.input_size()
            << "\n";
        for (std::size_t i = 0; i < m.num_layers(); ++i) {
            out << "  layer " << i << "\tdense " << m.layer(i).input_size() << "->"
                << m.layer(i).output_size() << " " << to_string(m.layer(i).activation) << "\n";
        }
        return kOk;
    }
    if (bytes.find("\"nncov-profile\"") != std::string::npos) {
        const NeuronProfile p = parse_profile(bytes);
        out << "profile\n  model_id\t" << to_hex(p.model_id) << "\n  samples\t" << p.sample_count
            << "\n";
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            float lo = p.layers[l][0].low, hi = p.layers[l][0].high;
            for (const auto& b : p.layers[l]) {
                lo = std::min(lo, b.low);
                hi = std::max(hi, b.high);
            }
            out << "  layer " << l << "\t" << p.layers[l].size() << " neurons, range [" << lo << ", "
                << hi << "]\n";
        }
        return kOk;
    }
    if (bytes.find("\"nncov-report\"") != std::string::npos) {
        const CoverageReport r = parse_report(bytes);
        out << "report\n  model_id\t" << to_hex(r.model_id) << "\n  inputs_seen\t" << r.inputs_seen
            << "\n  k_sections\t" << r.config.k_sections << "\n  top_k\t" << r.config.top_k
            << "\n  nc_threshold\t" << r.config.nc_threshold << "\n";
        print_summary(out, r);
        return kOk;
    }
    throw FormatError("'" + path + "' is not a recognised artifact file");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Coverage analysis for feedforward neural networks", "nncov"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a seeded synthetic dataset");
    gen_cmd->add_option("--kind", gen.kind, "blobs or moons")
        ->check(CLI::IsMember({"blobs", "moons"}))
        ->capture_default_str();
    gen_cmd->add_option("--n", gen.n, "Number of examples")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "PRNG seed")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "Output dataset")->required()->check(kWritablePath);
    gen_cmd->add_option("--test-out", gen.test_out, "Also split off a test set into this file")
        ->check(kWritablePath);
    gen_cmd->add_option("--test-count", gen.test_count, "Examples moved to the test set (taken from the end)")
        ->capture_default_str();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train an MLP with mini-batch SGD");
    train_cmd->add_option("--data", tr.data, "Training dataset")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", tr.out, "Output model")->required()->check(kWritablePath);
    train_cmd->add_option("--init", tr.init, "Start from this model instead of a fresh one")
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--hidden", tr.hidden, "Hidden layer widths for a fresh model")
        ->delimiter(',')
        ->capture_default_str();
    train_cmd->add_option("--activation", tr.activation, "Hidden activation for a fresh model")
        ->check(CLI::IsMember({"relu", "sigmoid", "identity"}))
        ->capture_default_str();
    train_cmd->add_option("--init-seed", tr.init_seed, "Weight initialization seed")->capture_default_str();
    train_cmd->add_option("--epochs", tr.options.epochs, "Training epochs")->capture_default_str();
    train_cmd->add_option("--lr", tr.options.learning_rate, "Learning rate")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    train_cmd->add_option("--batch-size", tr.options.batch_size, "Mini-batch size")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    train_cmd->add_option("--seed", tr.options.seed, "Shuffle seed")->capture_default_str();

    ProfileArgs pr;
    auto* profile_sub = app.add_subcommand("profile", "Record per-neuron activation bounds");
    profile_sub->add_option("--model", pr.model, "Model file")->required()->check(CLI::ExistingFile);
    profile_sub->add_option("--data", pr.data, "Training dataset")->required()->check(CLI::ExistingFile);
    profile_sub->add_option("--out", pr.out, "Output profile")->required()->check(kWritablePath);
    profile_sub->add_option("--workers", pr.workers, "Worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    CoverArgs cv;
    auto* cover_cmd = app.add_subcommand("cover", "Measure coverage of a test suite");
    cover_cmd->add_option("--model", cv.model, "Model file")->required()->check(CLI::ExistingFile);
    cover_cmd->add_option("--profile", cv.profile, "Profile file")->required()->check(CLI::ExistingFile);
    auto* data_opt = cover_cmd->add_option("--data", cv.data, "Test datasets (repeatable, concatenated)")
                         ->check(CLI::ExistingFile);
    auto* trace_opt = cover_cmd->add_option("--trace-in", cv.trace_in, "Read activations from a trace stream")
                          ->check(CLI::ExistingFile);
    data_opt->excludes(trace_opt);
    cover_cmd->add_option("--trace-out", cv.trace_out, "Also write the activation traces")
        ->check(kWritablePath);
    cover_cmd->add_option("--state-out", cv.state_out, "Also write the coverage state")
        ->check(kWritablePath);
    cover_cmd->add_option("--k-sections", cv.config.k_sections, "Sections per neuron (KMNC)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cover_cmd->add_option("--top-k", cv.config.top_k, "Per-layer k (TKNC/TKNP)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cover_cmd->add_option("--nc-threshold", cv.config.nc_threshold, "Baseline NC threshold")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cover_cmd->add_option("--out", cv.out, "Output report")->required()->check(kWritablePath);
    cover_cmd->add_option("--shards", cv.shards, "Parallel accumulation shards")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    AttackArgs at;
    auto* attack_cmd = app.add_subcommand("attack", "Generate an adversarial suite");
    attack_cmd->add_option("--model", at.model, "Model file")->required()->check(CLI::ExistingFile);
    attack_cmd->add_option("--data", at.data, "Clean dataset")->required()->check(CLI::ExistingFile);
    attack_cmd->add_option("--out", at.out, "Output dataset")->required()->check(kWritablePath);
    attack_cmd->add_option("--method", at.method, "fgsm or bim")
        ->check(CLI::IsMember({"fgsm", "bim"}))
        ->capture_default_str();
    attack_cmd->add_option("--epsilon", at.config.epsilon, "L-infinity budget")->capture_default_str();
    attack_cmd->add_option("--alpha", at.config.alpha, "BIM step size")->capture_default_str();
    attack_cmd->add_option("--iterations", at.config.iterations, "BIM iterations")->capture_default_str();
    attack_cmd->add_option("--clip-min", at.config.clip_min, "Input domain minimum")->capture_default_str();
    attack_cmd->add_option("--clip-max", at.config.clip_max, "Input domain maximum")->capture_default_str();

    std::string base_path, ext_path;
    auto* diff_sub = app.add_subcommand("diff", "Per-criterion change between two reports");
    diff_sub->add_option("--base", base_path, "Baseline report")->required()->check(CLI::ExistingFile);
    diff_sub->add_option("--extended", ext_path, "Extended report")->required()->check(CLI::ExistingFile);

    std::string inspect_path;
    auto* inspect_cmd = app.add_subcommand("inspect", "Describe any artifact file");
    inspect_cmd->add_option("file", inspect_path, "Artifact file")->required()->check(CLI::ExistingFile);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*gen_cmd) return gen_data(gen, out);
        if (*train_cmd) return train(tr, out);
        if (*profile_sub) return profile_cmd(pr, out);
        if (*cover_cmd) {
            if (cv.data.empty() && cv.trace_in.empty()) {
                err << "cover: one of --data or --trace-in is required\n";
                return kUsage;
            }
            return cover(cv, out);
        }
        if (*attack_cmd) return attack(at, out);
        if (*diff_sub) return diff_cmd(base_path, ext_path, out);
        if (*inspect_cmd) return inspect(inspect_path, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    }
    return kUsage;
}

}  // namespace nncov::cli
