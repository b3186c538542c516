// Delimiter-driven data cleansing: recognize introduction/termination byte
// sequences in a raw capture stream, recover the implied tree, strip the
// delimiters, and serialize the remainder as XML.

#ifndef HYC_CLEANSE_HPP
#define HYC_CLEANSE_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "hyc/bytes.hpp"

namespace hyc {

/// Open/close byte sequences (1..8 bytes each) mapped to an element name.
struct DelimiterRule {
    std::string element_name;
    Bytes open;
    Bytes close;

    bool operator==(const DelimiterRule&) const = default;
};

/// Ordered rule set. Declaration order is match precedence for opens.
///
/// Validity: element names are unique, non-empty ASCII name tokens
/// ([A-Za-z_][A-Za-z0-9_.-]*); open sequences are pairwise distinct; no open
/// sequence equals any close sequence; all sequences are 1..8 bytes.
struct DelimiterSpec {
    std::vector<DelimiterRule> rules;
    std::string text_policy = "ascii-escape";

    bool operator==(const DelimiterSpec&) const = default;

    /// Throws std::invalid_argument describing the first violation.
    void validate() const;

    /// Parses the line-based rule file format:
    ///   rule <element_name> open=<hex> close=<hex>
    /// '#' starts a comment. The result is validated.
    static DelimiterSpec parse(std::string_view text);
    static DelimiterSpec parse_file(const std::filesystem::path& path);

    std::string serialize() const;
};

/// Tree node: an element (name, ordered children, unterminated marker) or a
/// text run. Text runs are non-empty and never adjacent to each other.
struct StructuredNode {
    enum class Kind { Element, Text };

    Kind kind = Kind::Text;
    std::string name;        // Element only
    bool unterminated = false;  // Element only: close never seen, closed at EOF
    std::vector<StructuredNode> children;  // Element only
    Bytes text;              // Text only

    static StructuredNode element(std::string name);
    static StructuredNode text_node(Bytes bytes);

    bool operator==(const StructuredNode&) const = default;
};

struct StructuredDocument {
    StructuredNode root = StructuredNode::element("extract");

    bool operator==(const StructuredDocument&) const = default;
};

/// Open elements nested deeper than this are not created; their open
/// sequences fall through to text.
inline constexpr std::size_t kMaxNesting = 1024;

/// Single left-to-right scan over raw bytes with a node stack rooted at
/// "extract". At each position, in order: the innermost open element's close
/// sequence is matched (pop), then each rule's open sequence in declaration
/// order (push), else the byte joins the current trailing text run. Elements
/// still open at end of input are closed and marked unterminated.
///
/// Pre: spec is valid (see DelimiterSpec::validate); raw may be empty.
/// Total and deterministic over arbitrary bytes.
StructuredDocument build_structure(std::span<const std::uint8_t> raw,
                                   const DelimiterSpec& spec);

/// The text bytes of build_structure(raw, spec) in document order;
/// equivalently raw with every recognized open/close occurrence deleted.
Bytes strip_delimiters(std::span<const std::uint8_t> raw, const DelimiterSpec& spec);

class MalformedXml : public std::runtime_error {
public:
    MalformedXml(std::size_t offset, const std::string& detail);
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Serializes a document: XML declaration then the tree, no insignificant
/// whitespace. Text bytes 0x20..0x7e are literal except & < > (entities) and
/// backslash; backslash and every byte outside that range appear as the
/// 4-character token \xHH (lowercase hex). Unterminated elements carry
/// unterminated="1". Deterministic; output is well-formed XML.
std::string to_xml(const StructuredDocument& doc);

/// Strict inverse of to_xml: accepts exactly its output (canonical escapes
/// only) and throws MalformedXml on anything else.
StructuredDocument from_xml(std::string_view text);

}  // namespace hyc

#endif
