#pragma once

// Persistent formats. Byte layouts are documented in FORMATS.md.
//
// Binary containers (dataset, trace stream, coverage state) share a prefix:
// 4-byte magic, u32 version, u32 header length, UTF-8 JSON header. Model,
// profile and report files are plain JSON. All integers and floats are
// little-endian.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nncov/coverage.hpp"
#include "nncov/dataset.hpp"
#include "nncov/network.hpp"
#include "nncov/profiler.hpp"

namespace nncov {

inline constexpr std::uint32_t kFormatVersion = 1;

// Dataset container ("DGDS").
std::string serialize_dataset(const Dataset& ds);
Dataset parse_dataset(std::string_view bytes);

// Model file (JSON).
std::string serialize_model(const Model& model);
Model parse_model(std::string_view text);

// Profile file (JSON).
std::string serialize_profile(const NeuronProfile& profile);
NeuronProfile parse_profile(std::string_view text);

// Report file (JSON).
std::string serialize_report(const CoverageReport& report);
CoverageReport parse_report(std::string_view text);

// Coverage state ("DGCS").
std::string serialize_state(const CoverageState& state);
CoverageState parse_state(std::string_view bytes);

// Activation trace stream ("DGTR").
struct TraceHeader {
    std::uint64_t model_id = 0;
    std::vector<std::size_t> layer_sizes;
    std::uint64_t count = 0;
    bool operator==(const TraceHeader&) const = default;
};

/// Streams records to `out`. The header is written on construction; finish()
/// checks that exactly `header.count` records were written.
class TraceWriter {
public:
    TraceWriter(std::ostream& out, TraceHeader header);
    /// Throws TraceError if the record does not match the header layout.
    void write(const ActivationTrace& trace);
    /// Throws TraceError if the record count differs from the header.
    void finish();

private:
    std::ostream& out_;
    TraceHeader header_;
    std::uint64_t written_ = 0;
};

/// Pulls records from `in` one at a time.
class TraceReader {
public:
    /// Reads and validates the header; throws BadMagicError, VersionError,
    /// TruncatedError or ParseError.
    explicit TraceReader(std::istream& in);
    const TraceHeader& header() const { return header_; }
    /// Next record, or nullopt once `count` records were read. Throws
    /// TruncatedError naming the record index if the stream ends early.
    std::optional<ActivationTrace> next();
    std::uint64_t records_read() const { return read_; }

private:
    std::istream& in_;
    TraceHeader header_;
    std::uint64_t read_ = 0;
};

std::string serialize_traces(const TraceHeader& header, std::span<const ActivationTrace> traces);
std::vector<ActivationTrace> parse_traces(std::string_view bytes, TraceHeader* header = nullptr);

// Files.
std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace nncov
