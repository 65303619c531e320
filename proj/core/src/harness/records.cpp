#include "emonas/harness/records.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "emonas/errors.hpp"
#include "emonas/labels.hpp"
#include "util/text.hpp"

namespace emonas::harness {

namespace {

constexpr std::string_view kHeader = "id,audio,sequence,label,session_id,speaker_id";

std::string relative_to(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || base.empty() || p.is_relative()) return p.generic_string();
  const auto rel = p.lexically_relative(base);
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

std::filesystem::path resolve(std::string_view cell, const std::filesystem::path& base) {
  if (cell.empty()) return {};
  std::filesystem::path p{std::string(cell)};
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

}  // namespace

std::string manifest_csv(const std::vector<UtteranceRecord>& records,
                         const std::filesystem::path& base) {
  std::ostringstream os;
  os << kHeader << '\n';
  for (const auto& r : records) {
    for (const std::string* field : {&r.id, &r.session, &r.speaker}) {
      if (field->find_first_of(",\n\r") != std::string::npos) {
        throw ValueError("manifest field '" + *field + "' contains a separator");
      }
    }
    os << r.id << ',' << relative_to(r.audio, base) << ',' << relative_to(r.sequence, base) << ','
       << emotion_name(r.label) << ',' << r.session << ',' << r.speaker << '\n';
  }
  return os.str();
}

std::vector<UtteranceRecord> parse_manifest(const std::string& text,
                                            const std::filesystem::path& base) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || util::trim(line) != kHeader) {
    throw FormatError("manifest header must be '" + std::string(kHeader) + "'");
  }
  std::vector<UtteranceRecord> records;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    const auto trimmed = util::trim(line);
    if (trimmed.empty()) continue;
    const auto cells = util::split_csv(trimmed);
    if (cells.size() != 6) {
      throw FormatError("manifest line " + std::to_string(n) + " has " +
                        std::to_string(cells.size()) + " columns, expected 6");
    }
    UtteranceRecord r;
    r.id = cells[0];
    r.audio = resolve(cells[1], base);
    r.sequence = resolve(cells[2], base);
    try {
      r.label = parse_emotion(cells[3]);
    } catch (const ValueError& e) {
      throw ValueError("manifest line " + std::to_string(n) + ": " + e.what());
    }
    r.session = cells[4];
    r.speaker = cells[5];
    records.push_back(std::move(r));
  }
  validate_records(records);
  return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records) {
  const std::string text = manifest_csv(records, path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return parse_manifest(os.str(), path.parent_path());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void validate_records(const std::vector<UtteranceRecord>& records) {
  std::set<std::string> ids;
  std::map<std::string, std::string> speaker_session;
  for (const auto& r : records) {
    if (r.id.empty()) throw ValueError("record with an empty id");
    if (!ids.insert(r.id).second) throw ValueError("duplicate utterance id '" + r.id + "'");
    if (r.session.empty() || r.speaker.empty()) {
      throw ValueError("record '" + r.id + "' lacks a session or speaker");
    }
    if (r.label < 0 || r.label >= static_cast<int>(kNumEmotions)) {
      throw ValueError("record '" + r.id + "' has label " + std::to_string(r.label));
    }
    auto [it, fresh] = speaker_session.emplace(r.speaker, r.session);
    if (!fresh && it->second != r.session) {
      throw ValueError("speaker '" + r.speaker + "' appears in sessions '" + it->second +
                       "' and '" + r.session + "'");
    }
  }
}

std::vector<Fold> make_folds(const std::vector<UtteranceRecord>& records) {
  validate_records(records);
  // session -> speaker -> ids; std::map keeps everything sorted.
  std::map<std::string, std::map<std::string, std::vector<std::string>>> layout;
  for (const auto& r : records) layout[r.session][r.speaker].push_back(r.id);
  if (layout.size() < 2) {
    throw ValueError("leave-one-session-out needs at least two sessions, found " +
                     std::to_string(layout.size()));
  }
  for (const auto& [session, speakers] : layout) {
    if (speakers.size() < 2) {
      throw ValueError("session '" + session + "' has a single speaker; cannot split it into "
                       "validation and test");
    }
  }

  std::vector<Fold> folds;
  std::size_t index = 0;
  for (const auto& [held_out, speakers] : layout) {
    Fold f;
    f.session = held_out;
    const std::size_t val_pos = index % speakers.size();
    std::size_t pos = 0;
    for (const auto& [speaker, ids] : speakers) {
      auto& dst = pos++ == val_pos ? f.val : f.test;
      if (&dst == &f.val) {
        f.val_speaker = speaker;
      } else {
        f.test_speakers.push_back(speaker);
      }
      dst.insert(dst.end(), ids.begin(), ids.end());
    }
    for (const auto& [session, others] : layout) {
      if (session == held_out) continue;
      for (const auto& [speaker, ids] : others) f.train.insert(f.train.end(), ids.begin(), ids.end());
    }
    std::sort(f.train.begin(), f.train.end());
    std::sort(f.val.begin(), f.val.end());
    std::sort(f.test.begin(), f.test.end());
    folds.push_back(std::move(f));
    ++index;
  }
  return folds;
}

}  // namespace emonas::harness
