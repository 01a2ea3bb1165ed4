#include "aid/log.hpp"

#include <iostream>
#include <mutex>

namespace aid {
namespace {

std::mutex &sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink &current_sink() {
  static WarningSink sink = [](std::string_view msg) {
    std::cerr << "aid: warning: " << msg << '\n';
  };
  return sink;
}

} // namespace

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(sink_mutex());
  auto old = std::move(current_sink());
  current_sink() = std::move(sink);
  return old;
}

void warn(std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (current_sink())
    current_sink()(message);
}

ScopedWarningCapture::ScopedWarningCapture() {
  previous_ = set_warning_sink([this](std::string_view msg) {
    text_.append(msg);
    text_.push_back('\n');
    ++count_;
  });
}

ScopedWarningCapture::~ScopedWarningCapture() {
  set_warning_sink(std::move(previous_));
}

} // namespace aid
