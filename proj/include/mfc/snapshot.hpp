#pragma once

// Self-describing snapshots of a population and (optionally) a block Q.
// Text snapshots are JSON with every double written as a C99 hex float, so
// decoding reproduces the exact bits; binary snapshots are CBOR, which
// stores IEEE doubles natively.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfc/ensemble.hpp"

namespace mfc::snapshot {

enum class Format { Text, Binary };
std::string to_string(Format f);
Format parse_format(const std::string& s);

inline constexpr int kVersion = 1;

struct Snapshot {
    std::uint64_t seed = 0;
    double rho = youla::kDefaultControlWeight;
    int resampled = 0;
    std::vector<youla::AgentParameters> params;
    ensemble::FactorBounds bounds;
    std::optional<ensemble::BlockQ> q;
};

Snapshot capture(const ensemble::EnsembleModel& model, const ensemble::BlockQ* q = nullptr);

// Rebuilds factors from the stored parameters; bounds are taken verbatim.
ensemble::EnsembleModel restore_model(const Snapshot& s);

std::vector<std::uint8_t> encode(const Snapshot& s, Format format);
// Format is detected from the first byte.
Snapshot decode(std::span<const std::uint8_t> bytes);

void save(const std::filesystem::path& path, const Snapshot& s, Format format);
Snapshot load(const std::filesystem::path& path);

bool operator==(const ensemble::FactorBounds& a, const ensemble::FactorBounds& b);
bool operator==(const ensemble::BlockQ& a, const ensemble::BlockQ& b);
bool operator==(const Snapshot& a, const Snapshot& b);

// Bit-exact double <-> "%a" text.
std::string hexfloat(double x);
double parse_hexfloat(const std::string& s);

}  // namespace mfc::snapshot
