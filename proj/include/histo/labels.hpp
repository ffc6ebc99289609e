#ifndef HISTO_LABELS_HPP
#define HISTO_LABELS_HPP

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace histo {

// Tissue classes. The integer encoding NT=0, NCT=1, VT=2 is relied on by
// task label maps, confusion-matrix layouts and stored artifacts; do not
// reorder.
enum class ClassLabel : int {
    NT = 0,  // non-tumor
    NCT = 1, // necrotic tumor
    VT = 2,  // viable tumor
};

inline constexpr int kNumClasses = 3;
inline constexpr std::array<ClassLabel, 3> kAllClasses = {ClassLabel::NT, ClassLabel::NCT,
                                                          ClassLabel::VT};

std::string label_name(ClassLabel label);

// Case-insensitive parse. Accepted aliases per class:
//   NT:  "nt", "non-tumor", "non_tumor", "nontumor"
//   NCT: "nct", "necrotic", "necrotic-tumor", "necrotic_tumor"
//   VT:  "vt", "viable", "viable-tumor", "viable_tumor"
std::optional<ClassLabel> try_parse_label(std::string_view text);

// Like try_parse_label but throws LabelError naming the offending string.
ClassLabel parse_label(std::string_view text);

} // namespace histo

#endif
