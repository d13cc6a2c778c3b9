#include "pspred/sa.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "pspred/dataset.hpp"
#include "pspred/io.hpp"

namespace pspred {

std::string to_string(SaDecision d) {
  switch (d) {
    case SaDecision::kGranted: return "granted";
    case SaDecision::kDenied: return "denied";
    case SaDecision::kRejected: return "rejected";
  }
  return "unknown";
}

namespace {

SaDecision decision_from_string(const std::string& s) {
  if (s == "granted") return SaDecision::kGranted;
  if (s == "denied") return SaDecision::kDenied;
  if (s == "rejected") return SaDecision::kRejected;
  throw PipelineError("unknown decision '" + s + "'");
}

}  // namespace

GrantRecord sa_decide(const SaState& state, Point tx) {
  GrantRecord r;
  r.tx = tx;
  if (!state.predictor) throw PipelineError("spectrum administrator has no trained predictor");
  const auto q = state.grid.grid_point_index(tx);
  if (!q) {
    r.reason = "location is not a grid point inside the area";
    return r;
  }
  if (!state.valid.valid(*q)) {
    r.reason = "location lies under an obstacle";
    return r;
  }
  try {
    const auto queries = nearest_valid_points(tx, state.k, state.valid);
    const auto preds = state.predictor->predict(tx, queries);
    std::vector<PointPrediction> pp;
    pp.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) pp.push_back({queries[i], preds[i]});
    BoundaryProposal proposal = propose_boundary(tx, pp, state.boundary);
    r.p_sn_dbm = adapt_power(proposal, state.protections, state.p_pn_dbm, state.fit);
    r.proposal = std::move(proposal);
    r.decision = SaDecision::kGranted;
  } catch (const DenialError& e) {
    r.decision = SaDecision::kDenied;
    r.reason = e.what();
  }
  return r;
}

GrantRecord sa_handle_request(SaState& state, Point tx) {
  GrantRecord r = sa_decide(state, tx);
  std::lock_guard<std::mutex> lock(state.log_mutex);
  r.seq = state.log.size();
  state.log.push_back(r);
  if (state.log_sink) *state.log_sink << to_json(r).dump() << '\n' << std::flush;
  return r;
}

nlohmann::json to_json(const GrantRecord& r) {
  nlohmann::json j = {{"seq", r.seq}, {"tx", {r.tx.x, r.tx.y}}, {"status", to_string(r.decision)}};
  if (r.decision == SaDecision::kGranted) {
    j["p_sn_dbm"] = r.p_sn_dbm;
    j["m"] = r.proposal->iterations_m;
    j["z_ooz_dbm"] = r.proposal->z_ooz_dbm;
    j["encloses_tx"] = r.proposal->encloses_transmitter;
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : r.proposal->points) pts.push_back({p.loc.x, p.loc.y, p.rss_dbm});
    j["boundary"] = pts;
  } else {
    j["reason"] = r.reason;
  }
  return j;
}

GrantRecord grant_record_from_json(const nlohmann::json& j) {
  try {
    GrantRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.tx = {j.at("tx").at(0).get<double>(), j.at("tx").at(1).get<double>()};
    r.decision = decision_from_string(j.at("status").get<std::string>());
    if (r.decision == SaDecision::kGranted) {
      r.p_sn_dbm = j.at("p_sn_dbm").get<double>();
      BoundaryProposal p;
      p.tx = r.tx;
      p.iterations_m = j.at("m").get<int>();
      p.z_ooz_dbm = j.at("z_ooz_dbm").get<double>();
      p.z_th_final_dbm = p.z_ooz_dbm;
      p.encloses_transmitter = j.at("encloses_tx").get<bool>();
      for (const auto& q : j.at("boundary")) {
        p.points.push_back({{q.at(0).get<double>(), q.at(1).get<double>()}, q.at(2).get<double>()});
      }
      r.proposal = std::move(p);
    } else {
      r.reason = j.at("reason").get<std::string>();
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(std::string("malformed grant record: ") + e.what());
  }
}

std::vector<GrantRecord> read_grant_log(std::istream& in) {
  std::vector<GrantRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(grant_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw PipelineError(std::string("grant log line is not JSON: ") + e.what());
    }
  }
  return out;
}

std::vector<std::uint64_t> replay_grant_log(const SaState& state, std::span<const GrantRecord> records) {
  std::vector<std::uint64_t> mismatches;
  for (const auto& rec : records) {
    const GrantRecord again = sa_decide(state, rec.tx);
    bool same = again.decision == rec.decision && again.reason == rec.reason;
    if (same && rec.decision == SaDecision::kGranted) {
      same = again.p_sn_dbm == rec.p_sn_dbm && again.proposal->iterations_m == rec.proposal->iterations_m &&
             again.proposal->points == rec.proposal->points;
    }
    if (!same) mismatches.push_back(rec.seq);
  }
  return mismatches;
}

std::string sa_handle_line(SaState& state, const std::string& line, bool* close, bool* stop) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    return nlohmann::json{{"status", "error"}, {"reason", "request is not valid JSON"}}.dump();
  }
  if (!req.is_object()) return nlohmann::json{{"status", "error"}, {"reason", "request must be an object"}}.dump();
  const std::string op = req.value("op", "request");
  if (op == "quit" || op == "shutdown") {
    if (close) *close = true;
    if (stop && op == "shutdown") *stop = true;
    return nlohmann::json{{"status", "bye"}}.dump();
  }
  if (op == "log") {
    std::lock_guard<std::mutex> lock(state.log_mutex);
    return nlohmann::json{{"status", "ok"}, {"records", state.log.size()}}.dump();
  }
  if (op != "request") return nlohmann::json{{"status", "error"}, {"reason", "unknown op '" + op + "'"}}.dump();
  const auto it = req.find("tx");
  if (it == req.end() || !it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number()) {
    return nlohmann::json{{"status", "error"}, {"reason", "request needs \"tx\": [x, y]"}}.dump();
  }
  try {
    return to_json(sa_handle_request(state, {(*it)[0].get<double>(), (*it)[1].get<double>()})).dump();
  } catch (const Error& e) {
    return nlohmann::json{{"status", "error"}, {"reason", e.what()}}.dump();
  }
}

namespace {

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

void serve_sa(SaState& state, int port, const std::function<void(int)>& on_ready) {
  Fd server(::socket(AF_INET, SOCK_STREAM, 0));
  if (server.get() < 0) throw PipelineError(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(server.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(server.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    throw PipelineError("cannot bind port " + std::to_string(port) + ": " + std::strerror(errno));
  }
  if (::listen(server.get(), 8) < 0) throw PipelineError(std::string("listen: ") + std::strerror(errno));
  socklen_t len = sizeof addr;
  ::getsockname(server.get(), reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_ready) on_ready(ntohs(addr.sin_port));

  bool stop = false;
  while (!stop) {
    Fd client(::accept(server.get(), nullptr, nullptr));
    if (client.get() < 0) {
      if (errno == EINTR) continue;
      throw PipelineError(std::string("accept: ") + std::strerror(errno));
    }
    std::string buffer;
    char chunk[4096];
    bool close = false;
    while (!close) {
      const ssize_t n = ::recv(client.get(), chunk, sizeof chunk, 0);
      if (n <= 0) break;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while (!close && (nl = buffer.find('\n')) != std::string::npos) {
        std::string line = buffer.substr(0, nl);
        buffer.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!send_all(client.get(), sa_handle_line(state, line, &close, &stop) + "\n")) close = true;
      }
    }
  }
}

}  // namespace pspred
