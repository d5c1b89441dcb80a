#include "codewm/cdp.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

extern char** environ;

namespace codewm {

using nlohmann::json;

namespace {

std::filesystem::path make_profile_dir() {
  auto tmpl = (std::filesystem::temp_directory_path() / "codewm-chrome-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw BrowserUnavailable(std::string("mkdtemp: ") + std::strerror(errno));
  return tmpl;
}

// The serverless Chromium bundle keeps its shared libraries and fonts next to
// the binary and ships a fonts.conf pointing at paths that do not exist here.
void add_bundle_env(const std::filesystem::path& exe, const std::filesystem::path& profile,
                    std::vector<std::string>& env) {
  const auto dir = exe.parent_path();
  std::error_code ec;
  if (std::filesystem::is_directory(dir / "lib", ec)) {
    std::string ld = "LD_LIBRARY_PATH=" + (dir / "lib").string() + ":" + dir.string();
    if (const char* old = std::getenv("LD_LIBRARY_PATH"); old && *old) ld += std::string(":") + old;
    env.push_back(ld);
  }
  if (std::filesystem::is_directory(dir / "fonts", ec) && !std::getenv("FONTCONFIG_FILE")) {
    const auto conf = profile / "fonts.conf";
    std::ofstream f(conf);
    f << "<?xml version=\"1.0\"?>\n<!DOCTYPE fontconfig SYSTEM \"fonts.dtd\">\n<fontconfig>\n"
      << "  <dir>/usr/share/fonts</dir>\n"
      << "  <dir>" << (dir / "fonts").string() << "</dir>\n"
      << "  <cachedir>" << (profile / "fontcache").string() << "</cachedir>\n"
      << "</fontconfig>\n";
    env.push_back("FONTCONFIG_FILE=" + conf.string());
  }
}

}  // namespace

CdpBrowser::CdpBrowser(const std::filesystem::path& executable, std::vector<std::string> extra_args) {
  std::error_code ec;
  if (executable.empty() || !std::filesystem::exists(executable, ec)) {
    throw BrowserUnavailable("browser executable not found: '" + executable.string() +
                             "' (set CODEWM_CHROME or run tools/fetch_chromium.sh)");
  }
  ::signal(SIGPIPE, SIG_IGN);
  profile_dir_ = make_profile_dir();

  std::vector<std::string> args = {executable.string(),
                                   "--headless=shell",
                                   "--single-process",
                                   "--no-zygote",
                                   "--no-sandbox",
                                   "--disable-gpu",
                                   "--disable-dev-shm-usage",
                                   "--disable-extensions",
                                   "--hide-scrollbars",
                                   "--mute-audio",
                                   "--no-first-run",
                                   "--force-color-profile=srgb",
                                   "--font-render-hinting=none",
                                   "--user-data-dir=" + profile_dir_.string(),
                                   "--remote-debugging-pipe"};
  for (auto& a : extra_args) args.push_back(std::move(a));
  args.push_back("about:blank");

  std::vector<std::string> env;
  for (char** e = environ; *e; ++e) {
    if (std::strncmp(*e, "LD_LIBRARY_PATH=", 16) != 0) env.emplace_back(*e);
  }
  add_bundle_env(executable, profile_dir_, env);
  if (std::none_of(env.begin(), env.end(), [](const std::string& s) { return s.rfind("LD_LIBRARY_PATH=", 0) == 0; })) {
    if (const char* old = std::getenv("LD_LIBRARY_PATH")) env.push_back(std::string("LD_LIBRARY_PATH=") + old);
  }

  // Everything the child touches is prepared before fork.
  std::vector<char*> argv, envp;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  for (auto& e : env) envp.push_back(e.data());
  envp.push_back(nullptr);
  const std::string log_path = (profile_dir_ / "browser.log").string();

  int to_child[2], from_child[2];
  if (pipe2(to_child, O_CLOEXEC) != 0 || pipe2(from_child, O_CLOEXEC) != 0) {
    throw BrowserUnavailable(std::string("pipe: ") + std::strerror(errno));
  }
  pid_ = fork();
  if (pid_ < 0) throw BrowserUnavailable(std::string("fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    setpgid(0, 0);
    // Move both ends out of the way first: pipe2 may have returned 3 or 4.
    const int in = fcntl(to_child[0], F_DUPFD, 10);
    const int out = fcntl(from_child[1], F_DUPFD, 10);
    if (in < 0 || out < 0 || dup2(in, 3) < 0 || dup2(out, 4) < 0) _exit(127);
    ::close(in);
    ::close(out);
    const int log = open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (log >= 0) {
      dup2(log, 1);
      dup2(log, 2);
      ::close(log);
    }
    execve(argv[0], argv.data(), envp.data());
    _exit(127);
  }
  setpgid(pid_, pid_);  // also done in the child; whichever runs first wins
  ::close(to_child[0]);
  ::close(from_child[1]);
  to_browser_ = to_child[1];
  from_browser_ = from_child[0];
  reader_ = std::thread([this] { reader_loop(); });

  try {
    call("Browser.getVersion", json::object(), {}, std::chrono::seconds(30));
  } catch (const Error& e) {
    close();
    throw BrowserUnavailable(std::string("browser did not start: ") + e.what() + " (log: " + log_path + ")");
  }
}

CdpBrowser::~CdpBrowser() { close(); }

void CdpBrowser::reader_loop() {
  std::string buf;
  char chunk[1 << 16];
  for (;;) {
    const ssize_t n = ::read(from_browser_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0;
    for (std::size_t nul; (nul = buf.find('\0', start)) != std::string::npos; start = nul + 1) {
      json msg;
      try {
        msg = json::parse(std::string_view(buf).substr(start, nul - start));
      } catch (const json::exception& e) {
        spdlog::warn("cdp: unparseable message: {}", e.what());
        continue;
      }
      if (msg.contains("id")) {
        std::lock_guard lock(mu_);
        auto it = pending_.find(msg.at("id").get<int>());
        if (it != pending_.end()) {
          it->second.set_value(std::move(msg));
          pending_.erase(it);
        }
        continue;
      }
      const auto method = msg.value("method", std::string());
      EventHandler handler;
      {
        std::lock_guard lock(mu_);
        if (auto h = handlers_.find(method); h != handlers_.end()) handler = h->second;
      }
      if (handler) {
        try {
          handler(*this, msg);
        } catch (const std::exception& e) {
          spdlog::warn("cdp: handler for {} failed: {}", method, e.what());
        }
        continue;
      }
      std::lock_guard lock(mu_);
      auto& q = events_[msg.value("sessionId", std::string())];
      q.push_back(std::move(msg));
      // Nobody waits on most event kinds; keep the backlog bounded.
      if (q.size() > 256) q.pop_front();
      events_cv_.notify_all();
    }
    buf.erase(0, start);
  }
  fail_all("browser pipe closed");
}

void CdpBrowser::fail_all(const std::string& why) {
  std::lock_guard lock(mu_);
  dead_ = true;
  if (dead_reason_.empty()) dead_reason_ = why;
  for (auto& [id, p] : pending_) {
    p.set_exception(std::make_exception_ptr(BrowserUnavailable(why)));
  }
  pending_.clear();
  events_cv_.notify_all();
}

void CdpBrowser::write_message(const std::string& text) {
  std::lock_guard lock(write_mu_);
  const char* p = text.c_str();
  std::size_t left = text.size() + 1;  // include the NUL terminator
  while (left > 0) {
    const ssize_t n = ::write(to_browser_, p, left);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw BrowserUnavailable(std::string("write to browser: ") + std::strerror(errno));
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

json CdpBrowser::call(const std::string& method, const json& params, const std::string& session_id,
                      std::chrono::milliseconds timeout) {
  int id;
  std::future<json> fut;
  {
    std::lock_guard lock(mu_);
    if (dead_) throw BrowserUnavailable(dead_reason_);
    id = next_id_++;
    fut = pending_[id].get_future();
  }
  json msg{{"id", id}, {"method", method}, {"params", params}};
  if (!session_id.empty()) msg["sessionId"] = session_id;
  write_message(msg.dump());
  if (fut.wait_for(timeout) != std::future_status::ready) {
    std::lock_guard lock(mu_);
    pending_.erase(id);
    throw CdpTimeout(method + " timed out");
  }
  json reply = fut.get();
  if (reply.contains("error")) {
    throw CdpError(method + ": " + reply.at("error").value("message", reply.at("error").dump()));
  }
  return reply.value("result", json::object());
}

void CdpBrowser::send(const std::string& method, const json& params, const std::string& session_id) {
  int id;
  {
    std::lock_guard lock(mu_);
    if (dead_) return;
    id = next_id_++;
  }
  json msg{{"id", id}, {"method", method}, {"params", params}};
  if (!session_id.empty()) msg["sessionId"] = session_id;
  write_message(msg.dump());
}

void CdpBrowser::on(const std::string& method, EventHandler handler) {
  std::lock_guard lock(mu_);
  handlers_[method] = std::move(handler);
}

void CdpBrowser::clear_events(const std::string& session_id) {
  std::lock_guard lock(mu_);
  events_.erase(session_id);
}

json CdpBrowser::wait_event(const std::string& session_id, const std::string& method,
                            std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::unique_lock lock(mu_);
  for (;;) {
    auto& q = events_[session_id];
    while (!q.empty()) {
      json ev = std::move(q.front());
      q.pop_front();
      if (ev.value("method", std::string()) == method) return ev;
    }
    if (dead_) throw BrowserUnavailable(dead_reason_);
    if (events_cv_.wait_until(lock, deadline) == std::cv_status::timeout) {
      throw CdpTimeout("waiting for " + method + " timed out");
    }
  }
}

bool CdpBrowser::alive() const {
  std::lock_guard lock(mu_);
  return !dead_;
}

void CdpBrowser::close() {
  if (pid_ <= 0) return;
  try {
    send("Browser.close", json::object(), {});
  } catch (const Error&) {
  }
  int status = 0;
  bool reaped = false;
  for (int i = 0; i < 40 && !reaped; ++i) {
    const pid_t r = waitpid(pid_, &status, WNOHANG);
    if (r == pid_ || (r < 0 && errno == ECHILD)) reaped = true;
    else std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  // Helpers share the group even when the main process has already exited.
  ::kill(-pid_, SIGKILL);
  if (!reaped) waitpid(pid_, &status, 0);
  ::close(to_browser_);
  if (reader_.joinable()) reader_.join();
  ::close(from_browser_);
  to_browser_ = from_browser_ = -1;
  pid_ = -1;
  std::error_code ec;
  std::filesystem::remove_all(profile_dir_, ec);
}

std::vector<int> processes_in_group(int pgid) {
  std::vector<int> out;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator("/proc", ec)) {
    const auto name = entry.path().filename().string();
    if (name.empty() || !std::all_of(name.begin(), name.end(), ::isdigit)) continue;
    std::ifstream f(entry.path() / "stat");
    std::string stat;
    if (!std::getline(f, stat)) continue;
    // Fields after the parenthesized command: state ppid pgrp ...
    const auto rp = stat.rfind(')');
    if (rp == std::string::npos) continue;
    std::istringstream rest(stat.substr(rp + 1));
    std::string state;
    int ppid = 0, pgrp = 0;
    rest >> state >> ppid >> pgrp;
    if (pgrp == pgid && state != "Z") out.push_back(std::stoi(name));
  }
  return out;
}

}  // namespace codewm
