#include "tcape/log.hpp"

#include <iostream>
#include <mutex>

namespace tcape::log {
namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

Sink& current() {
  static Sink sink = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
  return sink;
}

}  // namespace

Sink set_warning_sink(Sink sink) {
  std::lock_guard lock(sink_mutex());
  Sink old = std::move(current());
  current() = std::move(sink);
  return old;
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex());
  if (current()) current()(message);
}

}  // namespace tcape::log
