#include "emonas/harness/dot.hpp"

#include <cctype>
#include <sstream>

#include "emonas/errors.hpp"
#include "emonas/search_space/ops.hpp"

namespace emonas::harness {

namespace {

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string source_name(std::size_t source) {
  if (source == 0) return "c_{k-2}";
  if (source == 1) return "c_{k-1}";
  return std::to_string(source - 2);
}

void write_cell(std::ostream& os, const char* name, const darts::GenotypeCell& cell) {
  os << "digraph " << name << " {\n";
  os << "  rankdir=LR;\n";
  os << "  node [shape=box, style=filled, fillcolor=lightblue];\n";
  os << "  " << quote("c_{k-2}") << ";\n  " << quote("c_{k-1}") << ";\n";
  for (std::size_t j = 0; j < cell.nodes.size(); ++j) {
    os << "  " << quote(std::to_string(j)) << " [fillcolor=lightyellow];\n";
  }
  os << "  " << quote("c_{k}") << " [fillcolor=palegreen];\n";
  for (std::size_t j = 0; j < cell.nodes.size(); ++j) {
    for (const auto& e : cell.nodes[j]) {
      os << "  " << quote(source_name(e.source)) << " -> " << quote(std::to_string(j))
         << " [label=" << quote(space::to_string(e.op)) << "];\n";
    }
  }
  for (std::size_t j = 0; j < cell.nodes.size(); ++j) {
    os << "  " << quote(std::to_string(j)) << " -> " << quote("c_{k}") << " [style=dashed];\n";
  }
  os << "}\n";
}

// Minimal reader for the subset emitted above.
class DotReader {
 public:
  explicit DotReader(std::string_view text) : text_(text) {}

  std::vector<DotEdge> edges() {
    std::vector<DotEdge> out;
    while (skip_space(), pos_ < text_.size()) {
      expect_word("digraph");
      const std::string graph = identifier();
      expect('{');
      while (skip_space(), peek() != '}') {
        if (pos_ >= text_.size()) fail("unterminated graph");
        statement(graph, out);
      }
      expect('}');
    }
    return out;
  }

 private:
  void statement(const std::string& graph, std::vector<DotEdge>& out) {
    const std::string first = identifier();
    skip_space();
    if (peek() == '=') {  // graph attribute, e.g. rankdir=LR
      ++pos_;
      identifier();
      expect(';');
      return;
    }
    if (text_.substr(pos_, 2) == "->") {
      pos_ += 2;
      DotEdge e{graph, first, identifier(), {}};
      for (const auto& [key, value] : attributes()) {
        if (key == "label") e.label = value;
      }
      expect(';');
      out.push_back(std::move(e));
      return;
    }
    attributes();  // node statement or node/edge defaults
    expect(';');
  }

  std::vector<std::pair<std::string, std::string>> attributes() {
    std::vector<std::pair<std::string, std::string>> out;
    skip_space();
    if (peek() != '[') return out;
    ++pos_;
    while (skip_space(), peek() != ']') {
      if (pos_ >= text_.size()) fail("unterminated attribute list");
      std::string key = identifier();
      expect('=');
      out.emplace_back(std::move(key), identifier());
      skip_space();
      if (peek() == ',') ++pos_;
    }
    ++pos_;
    return out;
  }

  std::string identifier() {
    skip_space();
    if (peek() == '"') {
      ++pos_;
      std::string s;
      while (pos_ < text_.size() && text_[pos_] != '"') {
        if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) ++pos_;
        s += text_[pos_++];
      }
      if (pos_ >= text_.size()) fail("unterminated string");
      ++pos_;
      return s;
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                   text_[pos_] == '_' || text_[pos_] == '.')) {
      ++pos_;
    }
    if (start == pos_) fail("expected an identifier");
    return std::string(text_.substr(start, pos_ - start));
  }

  void expect_word(std::string_view word) {
    if (identifier() != word) fail("expected '" + std::string(word) + "'");
  }
  void expect(char c) {
    skip_space();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("DOT parse error at offset " + std::to_string(pos_) + ": " + what);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string export_dot(const darts::Genotype& genotype) {
  genotype.validate();
  std::ostringstream os;
  write_cell(os, "normal", genotype.normal);
  os << '\n';
  write_cell(os, "reduction", genotype.reduction);
  return os.str();
}

std::string export_dot(const rnn::RnnCellGraph& cell) {
  std::ostringstream os;
  os << "digraph " << quote(cell.name()) << " {\n";
  os << "  rankdir=LR;\n";
  os << "  node [shape=box, style=filled, fillcolor=lightyellow];\n";
  for (std::string_view src : {rnn::kInputSource, rnn::kH1Source, rnn::kH2Source}) {
    os << "  " << quote(src) << " [fillcolor=lightblue];\n";
  }
  for (std::size_t i : cell.order()) {
    const auto& n = cell.nodes()[i];
    os << "  " << quote(n.name) << " [label=" << quote(n.name + ": " + std::string(space::to_string(n.op)))
       << "];\n";
  }
  os << "  " << quote("h1_next") << " [fillcolor=palegreen];\n";
  os << "  " << quote("h2_next") << " [fillcolor=palegreen];\n";
  for (std::size_t i : cell.order()) {
    const auto& n = cell.nodes()[i];
    for (const auto& in : n.inputs) {
      os << "  " << quote(in) << " -> " << quote(n.name)
         << " [label=" << quote(space::to_string(n.op)) << "];\n";
    }
  }
  os << "  " << quote(cell.h1_output()) << " -> " << quote("h1_next") << " [style=dashed];\n";
  os << "  " << quote(cell.h2_output()) << " -> " << quote("h2_next") << " [style=dashed];\n";
  os << "}\n";
  return os.str();
}

std::vector<DotEdge> parse_dot_edges(std::string_view text) { return DotReader(text).edges(); }

}  // namespace emonas::harness
