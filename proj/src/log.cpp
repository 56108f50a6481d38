// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "tano/log.hpp"

#include <iostream>
#include <mutex>

namespace tano {
namespace {

std::mutex g_mu;
LogLevel g_level = LogLevel::kWarning;
LogSink g_sink;

void emit(LogLevel level, const std::string& message) {
  std::lock_guard<std::mutex> lock(g_mu);
  if (static_cast<int>(level) > static_cast<int>(g_level)) return;
  if (g_sink) {
    g_sink(level, message);
    return;
  }
  std::cerr << (level == LogLevel::kWarning ? "[tano] warning: " : "[tano] ")
            << message << '\n';
}

}  // namespace

void set_log_level(LogLevel level) {
  std::lock_guard<std::mutex> lock(g_mu);
  g_level = level;
}

LogLevel log_level() {
  std::lock_guard<std::mutex> lock(g_mu);
  return g_level;
}

void set_log_sink(LogSink sink) {
  std::lock_guard<std::mutex> lock(g_mu);
  g_sink = std::move(sink);
}

void log_warning(const std::string& message) { emit(LogLevel::kWarning, message); }
void log_info(const std::string& message) { emit(LogLevel::kInfo, message); }

}  // namespace tano
