#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pspred/boundary.hpp"
#include "pspred/envgen.hpp"
#include "pspred/predictor.hpp"

namespace pspred {

enum class SaDecision { kGranted, kDenied, kRejected };

std::string to_string(SaDecision d);

struct GrantRecord {
  std::uint64_t seq = 0;
  Point tx;
  SaDecision decision = SaDecision::kRejected;
  double p_sn_dbm = 0.0;
  std::optional<BoundaryProposal> proposal;
  std::string reason;
};

/// Spectrum administrator: a trained predictor plus everything needed to answer requests.
struct SaState {
  GridSpec grid;
  VoxelMask valid;
  std::shared_ptr<const Predictor> predictor;
  PathLossFit fit;
  int k = 200;
  BoundaryConfig boundary;
  double p_pn_dbm = 30.0;
  std::vector<ProtectionBoundary> protections;

  std::vector<GrantRecord> log;
  std::ostream* log_sink = nullptr;  // each record is also appended here as one JSON line
  std::mutex log_mutex;
};

/// Decides one request: K nearest valid queries, prediction, boundary proposal, power
/// adaptation. Rejections (tx off-grid or under an obstacle) and denials are returned as
/// records, never thrown. The record is appended to the log.
GrantRecord sa_handle_request(SaState& state, Point tx);

/// Same decision without touching the log.
GrantRecord sa_decide(const SaState& state, Point tx);

nlohmann::json to_json(const GrantRecord& r);
GrantRecord grant_record_from_json(const nlohmann::json& j);

/// Re-decides every logged request and returns the sequence numbers whose outcome differs.
std::vector<std::uint64_t> replay_grant_log(const SaState& state, std::span<const GrantRecord> records);

/// Reads a JSON-lines grant log.
std::vector<GrantRecord> read_grant_log(std::istream& in);

/// One protocol exchange. Requests: {"op": "request", "tx": [x, y]}, {"op": "log"},
/// {"op": "quit"} (close connection), {"op": "shutdown"} (stop server). Returns the
/// response line without the newline and sets `close`/`stop` accordingly.
std::string sa_handle_line(SaState& state, const std::string& line, bool* close = nullptr, bool* stop = nullptr);

/// Line-delimited protocol on 127.0.0.1:port (0 picks a free port). `on_ready` receives the
/// bound port. Returns after a shutdown request.
void serve_sa(SaState& state, int port, const std::function<void(int)>& on_ready = {});

}  // namespace pspred
