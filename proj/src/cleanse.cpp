#include "hyc/cleanse.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace hyc {

namespace {

bool is_name_start(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}

bool is_name_char(char c) {
    return is_name_start(c) || (c >= '0' && c <= '9') || c == '.' || c == '-';
}

bool valid_name(const std::string& s) {
    if (s.empty() || !is_name_start(s[0])) return false;
    return std::all_of(s.begin() + 1, s.end(), is_name_char);
}

bool match_at(std::span<const std::uint8_t> raw, std::size_t pos, const Bytes& seq) {
    if (seq.empty() || raw.size() - pos < seq.size()) return false;
    return std::memcmp(raw.data() + pos, seq.data(), seq.size()) == 0;
}

}  // namespace

StructuredNode StructuredNode::element(std::string name) {
    StructuredNode n;
    n.kind = Kind::Element;
    n.name = std::move(name);
    return n;
}

StructuredNode StructuredNode::text_node(Bytes bytes) {
    StructuredNode n;
    n.kind = Kind::Text;
    n.text = std::move(bytes);
    return n;
}

void DelimiterSpec::validate() const {
    if (text_policy != "ascii-escape")
        throw std::invalid_argument("unknown text policy: " + text_policy);
    std::set<std::string> names;
    std::set<Bytes> opens;
    std::set<Bytes> closes;
    for (const DelimiterRule& r : rules) {
        if (!valid_name(r.element_name))
            throw std::invalid_argument("invalid element name: '" + r.element_name + "'");
        if (!names.insert(r.element_name).second)
            throw std::invalid_argument("duplicate element name: " + r.element_name);
        if (r.open.empty() || r.open.size() > 8)
            throw std::invalid_argument("open sequence of " + r.element_name +
                                        " must be 1..8 bytes");
        if (r.close.empty() || r.close.size() > 8)
            throw std::invalid_argument("close sequence of " + r.element_name +
                                        " must be 1..8 bytes");
        if (!opens.insert(r.open).second)
            throw std::invalid_argument("duplicate open sequence on " + r.element_name);
        closes.insert(r.close);
    }
    for (const DelimiterRule& r : rules)
        if (closes.count(r.open))
            throw std::invalid_argument("open sequence of " + r.element_name +
                                        " equals a close sequence");
}

DelimiterSpec DelimiterSpec::parse(std::string_view text) {
    DelimiterSpec spec;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string line(text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                                        : eol - pos));
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++lineno;

        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream in(line);
        std::string tok;
        std::vector<std::string> tokens;
        while (in >> tok) tokens.push_back(tok);
        if (tokens.empty()) continue;

        auto fail = [&](const std::string& msg) {
            throw std::invalid_argument("rules line " + std::to_string(lineno) + ": " + msg);
        };
        if (tokens[0] != "rule") fail("expected 'rule', got '" + tokens[0] + "'");
        if (tokens.size() != 4) fail("expected: rule <name> open=<hex> close=<hex>");
        if (tokens[2].rfind("open=", 0) != 0) fail("expected open=<hex>");
        if (tokens[3].rfind("close=", 0) != 0) fail("expected close=<hex>");
        DelimiterRule r;
        r.element_name = tokens[1];
        try {
            r.open = from_hex(std::string_view(tokens[2]).substr(5));
            r.close = from_hex(std::string_view(tokens[3]).substr(6));
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
        spec.rules.push_back(std::move(r));
    }
    spec.validate();
    return spec;
}

DelimiterSpec DelimiterSpec::parse_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open rules file " + path.string());
    std::stringstream buf;
    buf << f.rdbuf();
    return parse(buf.str());
}

std::string DelimiterSpec::serialize() const {
    std::string out;
    for (const DelimiterRule& r : rules)
        out += "rule " + r.element_name + " open=" + to_hex(r.open) +
               " close=" + to_hex(r.close) + "\n";
    return out;
}

StructuredDocument build_structure(std::span<const std::uint8_t> raw,
                                   const DelimiterSpec& spec) {
    StructuredDocument doc;

    // stack[i+1] is always a child of stack[i]; new children only ever go to
    // the top, so the raw pointers below stay valid.
    std::vector<StructuredNode*> stack;
    std::vector<const DelimiterRule*> open_rules;
    stack.push_back(&doc.root);

    auto append_text_byte = [&](std::uint8_t b) {
        auto& children = stack.back()->children;
        if (children.empty() || children.back().kind != StructuredNode::Kind::Text)
            children.push_back(StructuredNode::text_node({}));
        children.back().text.push_back(b);
    };

    std::size_t pos = 0;
    while (pos < raw.size()) {
        if (!open_rules.empty() && match_at(raw, pos, open_rules.back()->close)) {
            pos += open_rules.back()->close.size();
            open_rules.pop_back();
            stack.pop_back();
            continue;
        }
        if (open_rules.size() < kMaxNesting) {
            const DelimiterRule* opened = nullptr;
            for (const DelimiterRule& r : spec.rules) {
                if (match_at(raw, pos, r.open)) {
                    opened = &r;
                    break;
                }
            }
            if (opened) {
                stack.back()->children.push_back(StructuredNode::element(opened->element_name));
                stack.push_back(&stack.back()->children.back());
                open_rules.push_back(opened);
                pos += opened->open.size();
                continue;
            }
        }
        append_text_byte(raw[pos]);
        ++pos;
    }

    // Input ended with elements still open: close them where they stand.
    while (stack.size() > 1) {
        stack.back()->unterminated = true;
        stack.pop_back();
    }
    return doc;
}

Bytes strip_delimiters(std::span<const std::uint8_t> raw, const DelimiterSpec& spec) {
    StructuredDocument doc = build_structure(raw, spec);
    Bytes out;
    std::vector<const StructuredNode*> work{&doc.root};
    while (!work.empty()) {
        const StructuredNode* n = work.back();
        work.pop_back();
        if (n->kind == StructuredNode::Kind::Text) {
            out.insert(out.end(), n->text.begin(), n->text.end());
        } else {
            for (auto it = n->children.rbegin(); it != n->children.rend(); ++it)
                work.push_back(&*it);
        }
    }
    return out;
}

MalformedXml::MalformedXml(std::size_t offset, const std::string& detail)
    : std::runtime_error("malformed XML at offset " + std::to_string(offset) + ": " +
                         detail),
      offset_(offset) {}

namespace {

const std::string kXmlDecl = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>";
const std::string kUnterminatedAttr = " unterminated=\"1\"";

void append_escaped(std::string& out, std::uint8_t b) {
    switch (b) {
        case '&': out += "&amp;"; return;
        case '<': out += "&lt;"; return;
        case '>': out += "&gt;"; return;
    }
    if (b >= 0x20 && b <= 0x7e && b != '\\') {
        out.push_back(static_cast<char>(b));
        return;
    }
    static const char* digits = "0123456789abcdef";
    out += "\\x";
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0f]);
}

}  // namespace

std::string to_xml(const StructuredDocument& doc) {
    std::string out = kXmlDecl;

    // (node, next child index); emitted iteratively so depth is unbounded.
    std::vector<std::pair<const StructuredNode*, std::size_t>> stack;
    stack.emplace_back(&doc.root, 0);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next == 0) {
            if (node->children.empty()) {
                out += "<" + node->name + (node->unterminated ? kUnterminatedAttr : "") +
                       "/>";
                stack.pop_back();
                continue;
            }
            out += "<" + node->name + (node->unterminated ? kUnterminatedAttr : "") + ">";
        }
        if (next < node->children.size()) {
            const StructuredNode& child = node->children[next++];
            if (child.kind == StructuredNode::Kind::Text) {
                for (std::uint8_t b : child.text) append_escaped(out, b);
            } else {
                stack.emplace_back(&child, 0);
            }
        } else {
            out += "</" + node->name + ">";
            stack.pop_back();
        }
    }
    return out;
}

namespace {

// Strict parser for to_xml output only.
struct XmlParser {
    std::string_view in;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& detail) { throw MalformedXml(pos, detail); }

    bool eof() const { return pos >= in.size(); }
    char peek() const { return in[pos]; }

    bool consume(std::string_view lit) {
        if (in.substr(pos, lit.size()) != lit) return false;
        pos += lit.size();
        return true;
    }

    std::string parse_name() {
        std::size_t start = pos;
        if (eof() || !is_name_start(peek())) fail("expected element name");
        ++pos;
        while (!eof() && is_name_char(peek())) ++pos;
        return std::string(in.substr(start, pos - start));
    }

    std::uint8_t parse_text_char() {
        char c = peek();
        if (c == '&') {
            if (consume("&amp;")) return '&';
            if (consume("&lt;")) return '<';
            if (consume("&gt;")) return '>';
            fail("unknown entity");
        }
        if (c == '\\') {
            if (pos + 4 > in.size() || in[pos + 1] != 'x') fail("bad \\xHH token");
            auto nib = [&](char h) -> int {
                if (h >= '0' && h <= '9') return h - '0';
                if (h >= 'a' && h <= 'f') return h - 'a' + 10;
                return -1;
            };
            int hi = nib(in[pos + 2]), lo = nib(in[pos + 3]);
            if (hi < 0 || lo < 0) fail("bad \\xHH token");
            auto b = static_cast<std::uint8_t>(hi << 4 | lo);
            // Canonical output never escapes bytes it can emit literally.
            if (b >= 0x20 && b <= 0x7e && b != '\\') fail("non-canonical \\xHH escape");
            pos += 4;
            return b;
        }
        auto b = static_cast<std::uint8_t>(c);
        if (b < 0x20 || b > 0x7e) fail("raw byte outside printable range");
        ++pos;
        return b;
    }

    StructuredDocument parse() {
        if (!consume(kXmlDecl)) fail("missing XML declaration");
        StructuredDocument doc;
        doc.root.children.clear();

        std::vector<StructuredNode*> stack;
        bool root_done = false;

        auto open_element = [&]() {
            ++pos;  // '<'
            std::string name = parse_name();
            bool unterminated = consume(kUnterminatedAttr);
            StructuredNode node = StructuredNode::element(std::move(name));
            node.unterminated = unterminated;
            bool self_closing = consume("/>");
            if (!self_closing && !consume(">")) fail("expected '>' or '/>'");

            if (stack.empty()) {
                if (node.name != "extract") fail("root element must be 'extract'");
                doc.root = std::move(node);
                if (self_closing)
                    root_done = true;
                else
                    stack.push_back(&doc.root);
            } else {
                stack.back()->children.push_back(std::move(node));
                if (!self_closing) stack.push_back(&stack.back()->children.back());
            }
        };

        if (eof() || peek() != '<') fail("expected root element");
        open_element();

        while (!root_done) {
            if (eof()) fail("input ends inside element");
            if (peek() == '<') {
                if (pos + 1 < in.size() && in[pos + 1] == '/') {
                    pos += 2;
                    std::string name = parse_name();
                    if (!consume(">")) fail("expected '>' after close tag");
                    if (name != stack.back()->name) fail("mismatched close tag " + name);
                    if (stack.back()->children.empty())
                        fail("non-empty form used for empty element");
                    stack.pop_back();
                    if (stack.empty()) root_done = true;
                } else {
                    open_element();
                }
            } else {
                Bytes text;
                while (!eof() && peek() != '<') text.push_back(parse_text_char());
                stack.back()->children.push_back(StructuredNode::text_node(std::move(text)));
            }
        }
        if (!eof()) fail("content after document end");
        return doc;
    }
};

}  // namespace

StructuredDocument from_xml(std::string_view text) {
    XmlParser p{text};
    return p.parse();
}

}  // namespace hyc
