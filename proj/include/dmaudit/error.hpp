#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace dmaudit {

// Base for every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidUri : public Error {
 public:
  explicit InvalidUri(const std::string& what) : Error("invalid URI: " + what) {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class PlaylistErrorKind { missing_header, malformed_tag, dangling_extinf };

class PlaylistError : public Error {
 public:
  PlaylistErrorKind kind;
  std::size_t line;  // 1-based

  PlaylistError(PlaylistErrorKind k, std::size_t line_no, const std::string& detail)
      : Error(label(k) + " at line " + std::to_string(line_no) + ": " + detail),
        kind(k),
        line(line_no) {}

  static std::string label(PlaylistErrorKind k) {
    switch (k) {
      case PlaylistErrorKind::missing_header: return "MissingHeader";
      case PlaylistErrorKind::malformed_tag: return "MalformedTag";
      case PlaylistErrorKind::dangling_extinf: return "DanglingExtinf";
    }
    return "PlaylistError";
  }
};

enum class FetchErrorKind { fetch_failed, length_mismatch };

class FetchError : public Error {
 public:
  FetchErrorKind kind;
  int status;  // 0 when the failure happened below HTTP
  std::string uri;

  FetchError(FetchErrorKind k, int status_code, std::string target, const std::string& detail)
      : Error(detail), kind(k), status(status_code), uri(std::move(target)) {}
};

class InsufficientEvidence : public Error {
 public:
  using Error::Error;
};

class MalformedSts : public Error {
 public:
  using Error::Error;
};

enum class ArchiveErrorKind { rate_limited, submit_failed, query_failed };

class ArchiveError : public Error {
 public:
  ArchiveErrorKind kind;
  int status;
  std::optional<int> retry_after_seconds;

  ArchiveError(ArchiveErrorKind k, int status_code, const std::string& detail,
               std::optional<int> retry_after = std::nullopt)
      : Error(detail), kind(k), status(status_code), retry_after_seconds(retry_after) {}
};

class BindFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace dmaudit
