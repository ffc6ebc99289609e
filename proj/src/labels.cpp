#include "histo/labels.hpp"

#include <algorithm>
#include <cctype>

#include "histo/errors.hpp"

namespace histo {

std::string label_name(ClassLabel label) {
    switch (label) {
    case ClassLabel::NT: return "NT";
    case ClassLabel::NCT: return "NCT";
    case ClassLabel::VT: return "VT";
    }
    return "?";
}

static std::string lowered(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::optional<ClassLabel> try_parse_label(std::string_view text) {
    const std::string t = lowered(text);
    if (t == "nt" || t == "non-tumor" || t == "non_tumor" || t == "nontumor")
        return ClassLabel::NT;
    if (t == "nct" || t == "necrotic" || t == "necrotic-tumor" || t == "necrotic_tumor")
        return ClassLabel::NCT;
    if (t == "vt" || t == "viable" || t == "viable-tumor" || t == "viable_tumor")
        return ClassLabel::VT;
    return std::nullopt;
}

ClassLabel parse_label(std::string_view text) {
    auto label = try_parse_label(text);
    if (!label)
        throw LabelError("unknown class label: \"" + std::string(text) + "\"");
    return *label;
}

} // namespace histo
