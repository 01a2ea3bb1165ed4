#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace aid {

using WarningSink = std::function<void(std::string_view)>;

// Default sink writes to stderr. Returns the previously installed sink.
WarningSink set_warning_sink(WarningSink sink);

void warn(std::string_view message);

/// Installs a sink for the lifetime of the object and restores the old one.
class ScopedWarningCapture {
public:
  ScopedWarningCapture();
  ~ScopedWarningCapture();
  ScopedWarningCapture(const ScopedWarningCapture &) = delete;
  ScopedWarningCapture &operator=(const ScopedWarningCapture &) = delete;

  const std::string &text() const { return text_; }
  int count() const { return count_; }

private:
  WarningSink previous_;
  std::string text_;
  int count_ = 0;
};

} // namespace aid
