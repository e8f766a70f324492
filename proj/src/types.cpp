#include "mfc/types.hpp"

namespace mfc {

std::string to_string(NormKind kind) { return kind == NormKind::Hinf ? "hinf" : "h2"; }

std::string to_string(BlockKind kind) { return kind == BlockKind::One ? "one" : "two"; }

NormKind parse_norm_kind(const std::string& text) {
    if (text == "hinf") return NormKind::Hinf;
    if (text == "h2") return NormKind::H2;
    throw std::invalid_argument("unknown norm kind '" + text + "' (expected hinf or h2)");
}

BlockKind parse_block_kind(const std::string& text) {
    if (text == "one") return BlockKind::One;
    if (text == "two") return BlockKind::Two;
    throw std::invalid_argument("unknown block kind '" + text + "' (expected one or two)");
}

}  // namespace mfc
