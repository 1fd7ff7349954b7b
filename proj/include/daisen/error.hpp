#ifndef DAISEN_ERROR_HPP
#define DAISEN_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace daisen {

enum class ErrorCode {
  kSessionClosed,
  kUnknownId,
  kTimeOrder,
  kSameLocation,
  kChildOpen,
  kIo,
  kParse,
  kValidation,
  kBadRange,
  kBadRegex,
  kBadParam,
  kCycle,
  kConfig,
  kBind,
};

inline std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSessionClosed: return "E_SESSION_CLOSED";
    case ErrorCode::kUnknownId: return "E_UNKNOWN_ID";
    case ErrorCode::kTimeOrder: return "E_TIME_ORDER";
    case ErrorCode::kSameLocation: return "E_SAME_LOCATION";
    case ErrorCode::kChildOpen: return "E_CHILD_OPEN";
    case ErrorCode::kIo: return "E_IO";
    case ErrorCode::kParse: return "E_PARSE";
    case ErrorCode::kValidation: return "E_VALIDATION";
    case ErrorCode::kBadRange: return "E_BAD_RANGE";
    case ErrorCode::kBadRegex: return "E_BAD_REGEX";
    case ErrorCode::kBadParam: return "E_BAD_PARAM";
    case ErrorCode::kCycle: return "E_CYCLE";
    case ErrorCode::kConfig: return "E_CONFIG";
    case ErrorCode::kBind: return "E_BIND";
  }
  return "E_UNKNOWN";
}

// HTTP status for an error surfaced through the query server.
inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownId: return 404;
    case ErrorCode::kIo:
    case ErrorCode::kCycle:
    case ErrorCode::kBind: return 500;
    default: return 400;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(code_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace daisen

#endif  // DAISEN_ERROR_HPP
