#include "nncov/formats.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "nncov/hash.hpp"

namespace nncov {

namespace {

using json = nlohmann::json;
// Floats printed with the shortest decimal that reads back to the same
// 32-bit value, and parsed with strtof.
using fjson = nlohmann::basic_json<std::map, std::vector, std::string, bool, std::int64_t,
                                   std::uint64_t, float>;

constexpr char kDatasetMagic[4] = {'D', 'G', 'D', 'S'};
constexpr char kTraceMagic[4] = {'D', 'G', 'T', 'R'};
constexpr char kStateMagic[4] = {'D', 'G', 'C', 'S'};
constexpr std::uint32_t kMaxHeaderBytes = 1u << 24;
constexpr std::uint32_t kMaxInputIdBytes = 1u << 16;

// Little-endian encoding helpers.
void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_u32(out, bits);
}
std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}
std::uint64_t get_u64(const char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}
float get_f32(const char* p) {
    const std::uint32_t bits = get_u32(p);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
}

/// Sequential reader over a byte buffer; every short read is a TruncatedError.
class Cursor {
public:
    Cursor(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    const char* take(std::size_t n, const std::string& context) {
        if (bytes_.size() - pos_ < n) {
            throw TruncatedError(what_ + " truncated " + context + " (needed " + std::to_string(n) +
                                 " bytes, " + std::to_string(bytes_.size() - pos_) + " left)");
        }
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint32_t u32(const std::string& ctx) { return get_u32(take(4, ctx)); }
    std::uint64_t u64(const std::string& ctx) { return get_u64(take(8, ctx)); }
    float f32(const std::string& ctx) { return get_f32(take(4, ctx)); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::string_view bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

template <typename Json>
Json parse_json(std::string_view text, const std::string& what) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(what + ": " + e.what());
    }
}

// Runs `fn`, translating nlohmann type/key errors into ParseError.
template <typename Fn>
auto decode(const std::string& what, Fn&& fn) {
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(what + ": " + e.what());
    }
}

void check_format_tag(const auto& j, const char* expected, const std::string& what) {
    if (!j.is_object()) throw ParseError(what + ": top-level value must be an object");
    if (j.contains("format") && j.at("format") != expected) {
        throw ParseError(what + ": format tag is not '" + std::string(expected) + "'");
    }
    if (!j.contains("version")) throw ParseError(what + ": missing version");
    const auto v = j.at("version").template get<std::int64_t>();
    if (v != kFormatVersion) {
        throw VersionError(what + ": unsupported version " + std::to_string(v));
    }
}

/// Rejects binary container headers whose keys are not exactly `required`
/// plus any subset of `optional`, and checks the embedded version.
void check_header_keys(const json& header, std::initializer_list<std::string_view> required,
                       std::initializer_list<std::string_view> optional, const std::string& what) {
    for (auto key : required) {
        if (!header.contains(key)) throw ParseError(what + " header: missing key '" + std::string(key) + "'");
    }
    for (const auto& [key, value] : header.items()) {
        const auto listed = [&](std::initializer_list<std::string_view> keys) {
            return std::find(keys.begin(), keys.end(), key) != keys.end();
        };
        if (!listed(required) && !listed(optional)) {
            throw ParseError(what + " header: unknown key '" + key + "'");
        }
    }
    if (!header.at("version").is_number_unsigned() || header.at("version").get<std::uint64_t>() != kFormatVersion) {
        throw VersionError(what + ": header version disagrees with container version");
    }
}

/// magic | u32 version | u32 header length | header JSON
std::string container_prefix(const char (&magic)[4], const json& header) {
    std::string out(magic, 4);
    put_u32(out, kFormatVersion);
    const std::string text = header.dump();
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    return out;
}

json read_container_prefix(Cursor& cur, const char (&magic)[4], const std::string& what) {
    const char* m = cur.take(4, "in magic");
    if (std::memcmp(m, magic, 4) != 0) {
        throw BadMagicError(what + ": bad magic, expected '" + std::string(magic, 4) + "'");
    }
    const auto version = cur.u32("in version");
    if (version != kFormatVersion) {
        throw VersionError(what + ": unsupported version " + std::to_string(version));
    }
    const auto len = cur.u32("in header length");
    const char* text = cur.take(len, "in header");
    json header = parse_json<json>(std::string_view(text, len), what + " header");
    if (!header.is_object()) throw ParseError(what + " header must be a JSON object");
    return header;
}

void require_finite(float v, const std::string& where) {
    if (!std::isfinite(v)) throw DataError("non-finite value " + where);
}

std::size_t sum(const std::vector<std::size_t>& v) {
    std::size_t s = 0;
    for (auto x : v) s += x;
    return s;
}

}  // namespace

// ---------------------------------------------------------------- dataset

std::string serialize_dataset(const Dataset& ds) {
    check_dataset(ds);
    json header;
    header["version"] = kFormatVersion;
    header["count"] = ds.size();
    header["input_size"] = ds.input_size;
    header["num_classes"] = ds.num_classes;
    header["provenance"] = ds.provenance;
    if (ds.input_ids != index_ids(ds.size())) header["input_ids"] = ds.input_ids;
    std::string out = container_prefix(kDatasetMagic, header);
    out.reserve(out.size() + ds.size() * (ds.input_size + 1) * 4);
    for (Eigen::Index i = 0; i < ds.inputs.size(); ++i) put_f32(out, ds.inputs.data()[i]);
    for (auto label : ds.labels) put_u32(out, label);
    return out;
}

Dataset parse_dataset(std::string_view bytes) {
    const std::string what = "dataset";
    Cursor cur(bytes, what);
    const json header = read_container_prefix(cur, kDatasetMagic, what);
    Dataset ds;
    std::size_t count = 0;
    check_header_keys(header, {"version", "count", "input_size", "num_classes", "provenance"}, {"input_ids"},
                      what);
    decode(what, [&] {
        count = header.at("count").get<std::size_t>();
        ds.input_size = header.at("input_size").get<std::size_t>();
        ds.num_classes = header.at("num_classes").get<std::size_t>();
        ds.provenance = header.at("provenance").get<std::string>();
        if (header.contains("input_ids")) {
            ds.input_ids = header.at("input_ids").get<std::vector<std::string>>();
        }
        return 0;
    });
    if (ds.input_size == 0 || ds.num_classes == 0) {
        throw HeaderMismatchError("dataset: input_size and num_classes must be positive");
    }
    if (count > 0 && (count > cur.remaining() / 4 || ds.input_size > cur.remaining() / 4)) {
        throw TruncatedError("dataset truncated: header declares " + std::to_string(count) + "x" +
                             std::to_string(ds.input_size) + " values, only " +
                             std::to_string(cur.remaining()) + " bytes follow");
    }
    if (header.contains("input_ids") && ds.input_ids == index_ids(count)) {
        throw HeaderMismatchError("dataset: explicit input_ids repeat the implicit row indices");
    }
    if (!header.contains("input_ids")) {
        ds.input_ids = index_ids(count);
    } else if (ds.input_ids.size() != count) {
        throw HeaderMismatchError("dataset: header lists " + std::to_string(ds.input_ids.size()) +
                                  " input ids for " + std::to_string(count) + " rows");
    }
    const std::size_t payload = count * ds.input_size * 4 + count * 4;
    if (cur.remaining() < payload) {
        throw TruncatedError("dataset truncated: payload needs " + std::to_string(payload) +
                             " bytes, found " + std::to_string(cur.remaining()));
    }
    if (cur.remaining() > payload) {
        throw HeaderMismatchError("dataset: " + std::to_string(cur.remaining() - payload) +
                                  " bytes beyond the payload declared by the header");
    }
    ds.inputs.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(ds.input_size));
    for (Eigen::Index i = 0; i < ds.inputs.size(); ++i) ds.inputs.data()[i] = cur.f32("in inputs");
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        ds.labels[i] = cur.u32("in labels");
        if (ds.labels[i] >= ds.num_classes) {
            throw HeaderMismatchError("dataset: label " + std::to_string(ds.labels[i]) + " at row " +
                                      std::to_string(i) + " exceeds num_classes " +
                                      std::to_string(ds.num_classes));
        }
    }
    return ds;
}

// ---------------------------------------------------------------- model

std::string serialize_model(const Model& model) {
    fjson j;
    j["format"] = "nncov-model";
    j["version"] = kFormatVersion;
    j["input_size"] = model.input_size();
    j["num_classes"] = model.num_classes();
    j["model_id"] = to_hex(model_id(model));
    fjson layers = fjson::array();
    for (std::size_t li = 0; li < model.num_layers(); ++li) {
        const auto& l = model.layer(li);
        fjson lj;
        lj["kind"] = "dense";
        lj["activation"] = std::string(to_string(l.activation));
        lj["input_size"] = l.input_size();
        lj["output_size"] = l.output_size();
        fjson w = fjson::array();
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            fjson row = fjson::array();
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) {
                require_finite(l.weights(r, c), "in weights of layer " + std::to_string(li));
                row.push_back(l.weights(r, c));
            }
            w.push_back(std::move(row));
        }
        fjson b = fjson::array();
        for (Eigen::Index c = 0; c < l.bias.cols(); ++c) {
            require_finite(l.bias(c), "in bias of layer " + std::to_string(li));
            b.push_back(l.bias(c));
        }
        lj["weights"] = std::move(w);
        lj["bias"] = std::move(b);
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    return j.dump(1) + "\n";
}

Model parse_model(std::string_view text) {
    const std::string what = "model file";
    const fjson j = parse_json<fjson>(text, what);
    check_format_tag(j, "nncov-model", what);
    return decode(what, [&] {
        std::vector<DenseLayer<float>> layers;
        for (const auto& lj : j.at("layers")) {
            const auto index = std::to_string(layers.size());
            if (lj.at("kind") != "dense") {
                throw ParseError(what + ": layer " + index + " has unsupported kind");
            }
            const auto in = lj.at("input_size").get<std::size_t>();
            const auto out = lj.at("output_size").get<std::size_t>();
            const auto& w = lj.at("weights");
            const auto& b = lj.at("bias");
            if (in == 0 || out == 0 || w.size() != in || b.size() != out) {
                throw HeaderMismatchError(what + ": layer " + index +
                                          " weights/bias do not match declared sizes");
            }
            DenseLayer<float> layer;
            try {
                layer.activation = parse_activation(lj.at("activation").get<std::string>());
            } catch (const ArgumentError& e) {
                throw ParseError(what + ": layer " + index + ": " + e.what());
            }
            layer.weights.resize(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
            layer.bias.resize(static_cast<Eigen::Index>(out));
            for (std::size_t r = 0; r < in; ++r) {
                if (w[r].size() != out) {
                    throw HeaderMismatchError(what + ": layer " + index + " weight row " +
                                              std::to_string(r) + " has the wrong length");
                }
                for (std::size_t c = 0; c < out; ++c) {
                    const float v = w[r][c].get<float>();
                    require_finite(v, "in weights of layer " + index);
                    layer.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
                }
            }
            for (std::size_t c = 0; c < out; ++c) {
                const float v = b[c].get<float>();
                require_finite(v, "in bias of layer " + index);
                layer.bias(static_cast<Eigen::Index>(c)) = v;
            }
            layers.push_back(std::move(layer));
        }
        Model model = [&] {
            try {
                return Model(std::move(layers));
            } catch (const Error& e) {
                throw HeaderMismatchError(what + ": " + e.what());
            }
        }();
        if (j.at("input_size").get<std::size_t>() != model.input_size() ||
            j.at("num_classes").get<std::size_t>() != model.num_classes()) {
            throw HeaderMismatchError(what + ": input_size/num_classes disagree with the layers");
        }
        if (j.contains("model_id")) {
            const auto stored = from_hex(j.at("model_id").get<std::string>());
            if (stored != model_id(model)) {
                throw HeaderMismatchError(what + ": stored model_id " + to_hex(stored) +
                                          " does not match content hash " +
                                          to_hex(model_id(model)));
            }
        }
        return model;
    });
}

// ---------------------------------------------------------------- profile

std::string serialize_profile(const NeuronProfile& profile) {
    fjson j;
    j["format"] = "nncov-profile";
    j["version"] = kFormatVersion;
    j["model_id"] = to_hex(profile.model_id);
    j["sample_count"] = profile.sample_count;
    fjson layers = fjson::array();
    for (const auto& layer : profile.layers) {
        fjson lj = fjson::array();
        for (const auto& b : layer) {
            require_finite(b.low, "in profile bounds");
            require_finite(b.high, "in profile bounds");
            lj.push_back(fjson::array({b.low, b.high}));
        }
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    if (!profile.stats.empty()) {
        fjson stats = fjson::array();
        for (const auto& layer : profile.stats) {
            fjson lj = fjson::array();
            for (const auto& s : layer) lj.push_back(fjson::array({s.mean, s.stddev}));
            stats.push_back(std::move(lj));
        }
        j["stats"] = std::move(stats);
    }
    return j.dump(1) + "\n";
}

NeuronProfile parse_profile(std::string_view text) {
    const std::string what = "profile file";
    const fjson j = parse_json<fjson>(text, what);
    check_format_tag(j, "nncov-profile", what);
    return decode(what, [&] {
        NeuronProfile p;
        p.model_id = from_hex(j.at("model_id").get<std::string>());
        p.sample_count = j.value("sample_count", std::uint64_t{0});
        for (const auto& lj : j.at("layers")) {
            std::vector<NeuronBounds> layer;
            for (const auto& pair : lj) {
                if (pair.size() != 2) throw ParseError(what + ": bounds must be [low, high] pairs");
                NeuronBounds b{pair[0].get<float>(), pair[1].get<float>()};
                require_finite(b.low, "in profile bounds");
                require_finite(b.high, "in profile bounds");
                if (!(b.low <= b.high)) {
                    throw HeaderMismatchError(what + ": neuron " + std::to_string(layer.size()) +
                                              " of layer " + std::to_string(p.layers.size()) +
                                              " has low > high");
                }
                layer.push_back(b);
            }
            if (layer.empty()) throw HeaderMismatchError(what + ": empty layer");
            p.layers.push_back(std::move(layer));
        }
        if (j.contains("stats")) {
            for (const auto& lj : j.at("stats")) {
                std::vector<NeuronStats> layer;
                for (const auto& pair : lj) {
                    if (pair.size() != 2) throw ParseError(what + ": stats must be [mean, std] pairs");
                    layer.push_back({pair[0].get<float>(), pair[1].get<float>()});
                }
                p.stats.push_back(std::move(layer));
            }
            std::vector<std::size_t> stat_sizes;
            for (const auto& l : p.stats) stat_sizes.push_back(l.size());
            if (stat_sizes != p.layer_sizes()) {
                throw HeaderMismatchError(what + ": stats are not shaped like the bounds");
            }
        }
        return p;
    });
}

// ---------------------------------------------------------------- report

namespace {

json config_json(const CoverageConfig& c) {
    return json{{"k_sections", c.k_sections}, {"top_k", c.top_k}, {"nc_threshold", c.nc_threshold}};
}

CoverageConfig config_from_json(const json& j) {
    if (!j.is_object() || j.size() != 3) throw ParseError("config must hold exactly k_sections, top_k, nc_threshold");
    CoverageConfig c;
    c.k_sections = j.at("k_sections").get<std::size_t>();
    c.top_k = j.at("top_k").get<std::size_t>();
    c.nc_threshold = j.at("nc_threshold").get<double>();
    return c;
}

}  // namespace

std::string serialize_report(const CoverageReport& r) {
    json j;
    j["format"] = "nncov-report";
    j["version"] = kFormatVersion;
    j["model_id"] = to_hex(r.model_id);
    j["profile_hash"] = to_hex(r.profile_hash);
    j["config"] = config_json(r.config);
    j["inputs_seen"] = r.inputs_seen;
    j["kmnc"] = r.kmnc;
    j["nbc"] = r.nbc;
    j["snac"] = r.snac;
    j["tknc"] = r.tknc;
    j["nc"] = r.nc;
    j["tknp"] = r.tknp;
    j["counts"] = json{{"neurons", r.counts.neurons},
                       {"covered_sections", r.counts.covered_sections},
                       {"upper_corner_neurons", r.counts.upper_corner_neurons},
                       {"lower_corner_neurons", r.counts.lower_corner_neurons},
                       {"topk_neurons", r.counts.topk_neurons},
                       {"nc_neurons", r.counts.nc_neurons},
                       {"patterns", r.counts.patterns}};
    return j.dump(2) + "\n";
}

CoverageReport parse_report(std::string_view text) {
    const std::string what = "report file";
    const json j = parse_json<json>(text, what);
    check_format_tag(j, "nncov-report", what);
    const CoverageReport r = decode(what, [&] {
        CoverageReport r;
        r.model_id = from_hex(j.at("model_id").get<std::string>());
        r.profile_hash = from_hex(j.at("profile_hash").get<std::string>());
        r.config = config_from_json(j.at("config"));
        r.inputs_seen = j.at("inputs_seen").get<std::uint64_t>();
        r.kmnc = j.at("kmnc").get<double>();
        r.nbc = j.at("nbc").get<double>();
        r.snac = j.at("snac").get<double>();
        r.tknc = j.at("tknc").get<double>();
        r.nc = j.at("nc").get<double>();
        r.tknp = j.at("tknp").get<std::uint64_t>();
        const auto& c = j.at("counts");
        r.counts.neurons = c.at("neurons").get<std::uint64_t>();
        r.counts.covered_sections = c.at("covered_sections").get<std::uint64_t>();
        r.counts.upper_corner_neurons = c.at("upper_corner_neurons").get<std::uint64_t>();
        r.counts.lower_corner_neurons = c.at("lower_corner_neurons").get<std::uint64_t>();
        r.counts.topk_neurons = c.at("topk_neurons").get<std::uint64_t>();
        r.counts.nc_neurons = c.at("nc_neurons").get<std::uint64_t>();
        r.counts.patterns = c.at("patterns").get<std::uint64_t>();
        return r;
    });
    // Ratios must be exactly recomputable from the counts.
    if (!(make_report(r.counts, r.inputs_seen, r.config, r.model_id, r.profile_hash) == r)) {
        throw HeaderMismatchError(what + ": ratios are inconsistent with the raw counts");
    }
    return r;
}

// ---------------------------------------------------------------- trace stream

namespace {

json trace_header_json(const TraceHeader& h) {
    return json{{"version", kFormatVersion},
                {"model_id", to_hex(h.model_id)},
                {"layer_sizes", h.layer_sizes},
                {"count", h.count}};
}

void check_record(const TraceHeader& header, const ActivationTrace& trace) {
    if (trace.layers.size() != header.layer_sizes.size()) {
        throw TraceError("trace '" + trace.input_id + "' has " + std::to_string(trace.layers.size()) +
                         " layers, stream header declares " +
                         std::to_string(header.layer_sizes.size()));
    }
    for (std::size_t l = 0; l < trace.layers.size(); ++l) {
        if (trace.layers[l].size() != header.layer_sizes[l]) {
            throw TraceError("trace '" + trace.input_id + "' layer " + std::to_string(l) + " has " +
                             std::to_string(trace.layers[l].size()) + " values, header declares " +
                             std::to_string(header.layer_sizes[l]));
        }
    }
}

void append_record(std::string& out, const ActivationTrace& trace) {
    put_u32(out, static_cast<std::uint32_t>(trace.input_id.size()));
    out += trace.input_id;
    for (const auto& layer : trace.layers) {
        for (float v : layer) put_f32(out, v);
    }
}

}  // namespace

TraceWriter::TraceWriter(std::ostream& out, TraceHeader header)
    : out_(out), header_(std::move(header)) {
    for (auto s : header_.layer_sizes) {
        if (s == 0) throw ArgumentError("trace header layer sizes must be positive");
    }
    const std::string prefix = container_prefix(kTraceMagic, trace_header_json(header_));
    out_.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
}

void TraceWriter::write(const ActivationTrace& trace) {
    if (written_ == header_.count) {
        throw TraceError("trace stream already holds the " + std::to_string(header_.count) +
                         " records its header declares");
    }
    check_record(header_, trace);
    std::string rec;
    append_record(rec, trace);
    out_.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    ++written_;
}

void TraceWriter::finish() {
    if (written_ != header_.count) {
        throw TraceError("trace stream header declares " + std::to_string(header_.count) +
                         " records, " + std::to_string(written_) + " written");
    }
    out_.flush();
}

namespace {

std::string read_exact(std::istream& in, std::size_t n, const std::string& context) {
    std::string buf(n, '\0');
    in.read(buf.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw TruncatedError("trace stream truncated " + context);
    }
    return buf;
}

}  // namespace

TraceReader::TraceReader(std::istream& in) : in_(in) {
    const std::string what = "trace stream";
    const std::string fixed = read_exact(in_, 12, "in its fixed prefix");
    if (std::memcmp(fixed.data(), kTraceMagic, 4) != 0) {
        throw BadMagicError("trace stream: bad magic, expected 'DGTR'");
    }
    const auto version = get_u32(fixed.data() + 4);
    if (version != kFormatVersion) {
        throw VersionError("trace stream: unsupported version " + std::to_string(version));
    }
    const auto len = get_u32(fixed.data() + 8);
    if (len > kMaxHeaderBytes) throw HeaderMismatchError("trace stream: header length out of range");
    const std::string text = read_exact(in_, len, "in its header");
    const json j = parse_json<json>(text, what + " header");
    check_header_keys(j, {"version", "model_id", "layer_sizes", "count"}, {}, what);
    decode(what, [&] {
        header_.model_id = from_hex(j.at("model_id").get<std::string>());
        header_.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        header_.count = j.at("count").get<std::uint64_t>();
        return 0;
    });
    for (auto s : header_.layer_sizes) {
        if (s == 0) throw HeaderMismatchError("trace stream: header declares an empty layer");
    }
}

std::optional<ActivationTrace> TraceReader::next() {
    if (read_ == header_.count) {
        if (in_.peek() != std::char_traits<char>::eof()) {
            throw HeaderMismatchError("trace stream: data continues past the " +
                                      std::to_string(header_.count) + " records in the header");
        }
        return std::nullopt;
    }
    const std::string where = "in record " + std::to_string(read_);
    const auto id_len = get_u32(read_exact(in_, 4, where).data());
    if (id_len > kMaxInputIdBytes) {
        throw HeaderMismatchError("trace stream: input id length " + std::to_string(id_len) + " " +
                                  where + " exceeds the limit");
    }
    ActivationTrace t;
    t.input_id = read_exact(in_, id_len, where);
    const std::string payload = read_exact(in_, sum(header_.layer_sizes) * 4, where);
    std::size_t off = 0;
    for (std::size_t l = 0; l < header_.layer_sizes.size(); ++l) {
        std::vector<float> values(header_.layer_sizes[l]);
        for (std::size_t i = 0; i < values.size(); ++i, off += 4) {
            values[i] = get_f32(payload.data() + off);
            if (!std::isfinite(values[i])) {
                throw DataError("trace stream: non-finite value in record " +
                                std::to_string(read_) + ", layer " + std::to_string(l) +
                                ", neuron " + std::to_string(i));
            }
        }
        t.layers.push_back(std::move(values));
    }
    ++read_;
    return t;
}

std::string serialize_traces(const TraceHeader& header, std::span<const ActivationTrace> traces) {
    std::ostringstream out;
    TraceWriter w(out, header);
    for (const auto& t : traces) w.write(t);
    w.finish();
    return std::move(out).str();
}

std::vector<ActivationTrace> parse_traces(std::string_view bytes, TraceHeader* header) {
    std::istringstream in{std::string(bytes)};
    TraceReader r(in);
    std::vector<ActivationTrace> out;
    while (auto t = r.next()) out.push_back(std::move(*t));
    if (header) *header = r.header();
    return out;
}

// ---------------------------------------------------------------- coverage state

std::string serialize_state(const CoverageState& state) {
    const auto raw = state.raw();
    const auto& profile = state.profile();
    json header;
    header["version"] = kFormatVersion;
    header["model_id"] = to_hex(state.model_id());
    header["profile_hash"] = to_hex(state.profile_hash());
    header["config"] = config_json(state.config());
    header["layer_sizes"] = state.layer_sizes();
    header["inputs_seen"] = raw.inputs_seen;
    header["pattern_count"] = raw.patterns.size();
    header["sample_count"] = profile.sample_count;
    header["has_stats"] = !profile.stats.empty();
    std::string out = container_prefix(kStateMagic, header);
    for (const auto& layer : profile.layers) {
        for (const auto& b : layer) {
            put_f32(out, b.low);
            put_f32(out, b.high);
        }
    }
    for (const auto& layer : profile.stats) {
        for (const auto& s : layer) {
            put_f32(out, s.mean);
            put_f32(out, s.stddev);
        }
    }
    for (auto w : raw.sections) put_u64(out, w);
    for (const auto* flags : {&raw.upper, &raw.lower, &raw.topk, &raw.nc}) {
        out.append(reinterpret_cast<const char*>(flags->data()), flags->size());
    }
    for (const auto& p : raw.patterns) {
        put_u32(out, static_cast<std::uint32_t>(p.size()));
        out += p;
    }
    return out;
}

CoverageState parse_state(std::string_view bytes) {
    const std::string what = "coverage state";
    Cursor cur(bytes, what);
    const json header = read_container_prefix(cur, kStateMagic, what);
    std::uint64_t model = 0, phash = 0, patterns = 0;
    bool has_stats = false;
    CoverageConfig config;
    std::vector<std::size_t> sizes;
    CoverageState::Raw raw;
    NeuronProfile profile;
    check_header_keys(header,
                      {"version", "model_id", "profile_hash", "config", "layer_sizes", "inputs_seen",
                       "pattern_count", "sample_count", "has_stats"},
                      {}, what);
    decode(what, [&] {
        model = from_hex(header.at("model_id").get<std::string>());
        phash = from_hex(header.at("profile_hash").get<std::string>());
        config = config_from_json(header.at("config"));
        sizes = header.at("layer_sizes").get<std::vector<std::size_t>>();
        raw.inputs_seen = header.at("inputs_seen").get<std::uint64_t>();
        patterns = header.at("pattern_count").get<std::uint64_t>();
        profile.sample_count = header.at("sample_count").get<std::uint64_t>();
        has_stats = header.at("has_stats").get<bool>();
        return 0;
    });
    if (config.k_sections == 0 || config.top_k == 0) {
        throw HeaderMismatchError(what + ": invalid config in header");
    }
    const std::size_t n = sum(sizes);
    const std::size_t words = (config.k_sections + 63) / 64;
    if (n > cur.remaining() || words > cur.remaining() || sizes.empty()) {
        throw TruncatedError(what + " truncated: header declares more storage than is present");
    }
    // Bound every allocation by the bytes actually present.
    const std::size_t fixed = n * 8 + (has_stats ? n * 8 : 0) + n * words * 8 + 4 * n;
    if (cur.remaining() < fixed) {
        throw TruncatedError(what + " truncated: body needs at least " + std::to_string(fixed) +
                             " bytes, found " + std::to_string(cur.remaining()));
    }
    profile.model_id = model;
    for (auto s : sizes) {
        std::vector<NeuronBounds> layer(s);
        for (auto& b : layer) {
            b.low = cur.f32("in profile bounds");
            b.high = cur.f32("in profile bounds");
        }
        profile.layers.push_back(std::move(layer));
    }
    if (has_stats) {
        for (auto s : sizes) {
            std::vector<NeuronStats> layer(s);
            for (auto& st : layer) {
                st.mean = cur.f32("in profile stats");
                st.stddev = cur.f32("in profile stats");
            }
            profile.stats.push_back(std::move(layer));
        }
    }
    if (profile_hash(profile) != phash) {
        throw HeaderMismatchError(what + ": embedded profile does not match profile_hash " +
                                  to_hex(phash));
    }
    raw.sections.resize(n * words);
    for (auto& w : raw.sections) w = cur.u64("in section bitsets");
    for (auto* flags : {&raw.upper, &raw.lower, &raw.topk, &raw.nc}) {
        const char* p = cur.take(n, "in neuron flags");
        flags->assign(p, p + n);
        for (auto f : *flags) {
            if (f > 1) throw HeaderMismatchError(what + ": neuron flag byte is neither 0 nor 1");
        }
    }
    const std::size_t pattern_len = sizes.size() * 4 * (1 + config.top_k);
    for (std::uint64_t i = 0; i < patterns; ++i) {
        const std::string ctx = "in pattern " + std::to_string(i);
        const auto len = cur.u32(ctx);
        if (len != pattern_len) {
            throw HeaderMismatchError(what + ": pattern " + std::to_string(i) + " has length " +
                                      std::to_string(len) + ", expected " +
                                      std::to_string(pattern_len));
        }
        const char* p = cur.take(len, ctx);
        std::string pattern(p, len);
        if (!raw.patterns.empty() && !(*raw.patterns.rbegin() < pattern)) {
            throw HeaderMismatchError(what + ": pattern " + std::to_string(i) +
                                      " is out of order or repeated");
        }
        raw.patterns.insert(raw.patterns.end(), std::move(pattern));
    }
    if (cur.remaining() != 0) {
        throw HeaderMismatchError(what + ": " + std::to_string(cur.remaining()) +
                                  " trailing bytes after the declared patterns");
    }
    try {
        return CoverageState::from_raw(model, std::move(profile), config, std::move(raw));
    } catch (const FormatError&) {
        throw;
    } catch (const Error& e) {
        throw HeaderMismatchError(what + ": " + e.what());
    }
}

// ---------------------------------------------------------------- files

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw Error("failed writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

}  // namespace nncov
