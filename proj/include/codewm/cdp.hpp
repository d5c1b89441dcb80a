#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "codewm/util.hpp"

namespace codewm {

class BrowserUnavailable : public Error {
 public:
  using Error::Error;
};
class CdpError : public Error {
 public:
  using Error::Error;
};
class CdpTimeout : public CdpError {
 public:
  using CdpError::CdpError;
};

/// Headless Chromium driven over --remote-debugging-pipe (NUL-delimited JSON
/// on fds 3/4). One reader thread routes replies by id and queues events per
/// session; any thread may issue calls.
class CdpBrowser {
 public:
  using EventHandler = std::function<void(CdpBrowser&, const nlohmann::json& event)>;

  /// Launches the browser. `executable` must exist; extra_args are appended.
  explicit CdpBrowser(const std::filesystem::path& executable, std::vector<std::string> extra_args = {});
  ~CdpBrowser();
  CdpBrowser(const CdpBrowser&) = delete;
  CdpBrowser& operator=(const CdpBrowser&) = delete;

  nlohmann::json call(const std::string& method, const nlohmann::json& params = nlohmann::json::object(),
                      const std::string& session_id = {},
                      std::chrono::milliseconds timeout = std::chrono::seconds(30));
  /// Sends without waiting for the reply (safe from event handlers).
  void send(const std::string& method, const nlohmann::json& params, const std::string& session_id);

  /// Events with this method bypass the queues and run on the reader thread.
  void on(const std::string& method, EventHandler handler);

  void clear_events(const std::string& session_id);
  /// Waits for the next queued event named `method` on the session, dropping
  /// others seen on the way. Throws CdpTimeout.
  nlohmann::json wait_event(const std::string& session_id, const std::string& method,
                            std::chrono::milliseconds timeout);

  /// Browser.close, then kills the whole process group and reaps it.
  void close();
  bool alive() const;
  int pid() const { return pid_; }

 private:
  void reader_loop();
  void write_message(const std::string& text);
  void fail_all(const std::string& why);

  int pid_ = -1;
  int to_browser_ = -1;
  int from_browser_ = -1;
  std::filesystem::path profile_dir_;
  std::thread reader_;

  mutable std::mutex mu_;
  std::condition_variable events_cv_;
  std::mutex write_mu_;
  int next_id_ = 1;
  bool dead_ = false;
  std::string dead_reason_;
  std::map<int, std::promise<nlohmann::json>> pending_;
  std::map<std::string, std::deque<nlohmann::json>> events_;
  std::map<std::string, EventHandler> handlers_;
};

/// Pids whose process group is `pgid` (from /proc).
std::vector<int> processes_in_group(int pgid);

}  // namespace codewm
