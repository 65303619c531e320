#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace emonas::harness {

/// One labelled utterance. Paths are absolute once loaded from a manifest.
struct UtteranceRecord {
  std::string id;
  std::filesystem::path audio;
  std::filesystem::path sequence;
  int label = 0;
  std::string session;
  std::string speaker;
  friend bool operator==(const UtteranceRecord&, const UtteranceRecord&) = default;
};

/// CSV with header id,audio,sequence,label,session_id,speaker_id. Label is
/// a class name. Relative paths are resolved against the manifest's
/// directory on read and written relative to it when possible.
std::string manifest_csv(const std::vector<UtteranceRecord>& records,
                         const std::filesystem::path& base = {});
std::vector<UtteranceRecord> parse_manifest(const std::string& text,
                                            const std::filesystem::path& base = {});
void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records);
std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);

/// Throws ValueError on duplicate ids, empty session/speaker, or a speaker
/// that appears in more than one session.
void validate_records(const std::vector<UtteranceRecord>& records);

/// Leave-one-session-out split; members are utterance ids in sorted order.
struct Fold {
  std::string session;
  std::string val_speaker;
  std::vector<std::string> test_speakers;
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  friend bool operator==(const Fold&, const Fold&) = default;
};

/// One fold per session (sessions and speakers in sorted id order). In the
/// i-th held-out session the validation speaker is the (i mod S)-th of its S
/// speakers and the rest are test; with two speakers this alternates. The
/// plan does not depend on record order. Throws ValueError for fewer than
/// two sessions or a session with a single speaker.
std::vector<Fold> make_folds(const std::vector<UtteranceRecord>& records);

}  // namespace emonas::harness
