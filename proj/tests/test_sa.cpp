#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <future>
#include <sstream>
#include <thread>

#include "helpers.hpp"
#include "pspred/sa.hpp"

using namespace pspred;
using Json = nlohmann::json;

namespace {

void init_state(SaState& s) {
  const TrueEnvironment env = test::quiet_env(30, 30, {test::building(100, 100, 140, 140)});
  s.grid = env.grid;
  s.valid = valid_grid_points(env);
  s.fit = {3.0, env.ref_rss_dbm, env.ref_dist_m};
  s.predictor = std::make_shared<PlmPredictor>(s.fit);
  s.k = 200;
  s.boundary.n_points = 20;
  s.boundary.step_g_db = 10.0;
  s.boundary.noise_floor_dbm = -100.0;
  s.boundary.z0_cap_dbm = s.fit.z0_dbm;
}

std::string exchange(int fd, const std::string& line) {
  const std::string msg = line + "\n";
  REQUIRE(::send(fd, msg.data(), msg.size(), 0) == static_cast<ssize_t>(msg.size()));
  std::string out;
  char c;
  while (::recv(fd, &c, 1, 0) == 1 && c != '\n') out.push_back(c);
  return out;
}

}  // namespace

TEST_CASE("grants, denials and rejections") {
  SaState s;
  init_state(s);
  const GrantRecord g = sa_handle_request(s, {205, 205});
  REQUIRE(g.decision == SaDecision::kGranted);
  CHECK(g.p_sn_dbm == 30.0);
  REQUIRE(g.proposal.has_value());
  CHECK(g.proposal->points.size() == 20);

  CHECK(sa_handle_request(s, {203, 205}).decision == SaDecision::kRejected);
  CHECK(sa_handle_request(s, {-5, 5}).decision == SaDecision::kRejected);
  const GrantRecord under = sa_handle_request(s, {115, 115});
  CHECK(under.decision == SaDecision::kRejected);
  CHECK(under.reason.find("obstacle") != std::string::npos);

  ProtectionBoundary pb;
  pb.center = {245, 205};
  pb.points = {{180, 180}, {260, 180}, {260, 230}, {180, 230}};
  s.protections = {pb};
  CHECK(sa_handle_request(s, {205, 205}).decision == SaDecision::kDenied);

  // A protection the full-power boundary overlaps forces a reduced grant.
  pb.center = {245, 205};
  pb.points = {{235, 195}, {255, 195}, {255, 215}, {235, 215}};
  s.protections = {pb};
  const GrantRecord reduced = sa_handle_request(s, {205, 205});
  REQUIRE(reduced.decision == SaDecision::kGranted);
  CHECK(reduced.p_sn_dbm < 30.0);
  CHECK(reduced.p_sn_dbm > 20.0);
  CHECK(s.log.size() == 6);
  for (std::size_t i = 0; i < s.log.size(); ++i) CHECK(s.log[i].seq == i);
}

TEST_CASE("grant log replay") {
  SaState s;
  init_state(s);
  std::stringstream sink;
  s.log_sink = &sink;
  for (Point p : {Point{205, 205}, Point{55, 255}, Point{115, 115}, Point{1.0, 2.0}}) sa_handle_request(s, p);
  auto records = read_grant_log(sink);
  REQUIRE(records.size() == 4);
  CHECK(replay_grant_log(s, records).empty());
  records[1].p_sn_dbm -= 1.0;
  records[2].decision = SaDecision::kGranted;
  CHECK(replay_grant_log(s, records) == std::vector<std::uint64_t>{1, 2});
}

TEST_CASE("line protocol") {
  SaState s;
  init_state(s);
  bool close = false, stop = false;
  CHECK(Json::parse(sa_handle_line(s, "not json"))["status"] == "error");
  CHECK(Json::parse(sa_handle_line(s, R"({"op":"request"})"))["status"] == "error");
  CHECK(Json::parse(sa_handle_line(s, R"({"op":"dance"})"))["status"] == "error");
  CHECK(Json::parse(sa_handle_line(s, R"({"op":"request","tx":[205,205]})"))["status"] == "granted");
  CHECK(Json::parse(sa_handle_line(s, R"({"op":"log"})"))["records"] == 1);
  sa_handle_line(s, R"({"op":"quit"})", &close, &stop);
  CHECK(close);
  CHECK_FALSE(stop);
  sa_handle_line(s, R"({"op":"shutdown"})", &close, &stop);
  CHECK(stop);
}

TEST_CASE("socket server on an ephemeral port") {
  SaState s;
  init_state(s);
  std::promise<int> ready;
  auto port_future = ready.get_future();
  std::thread server([&] { serve_sa(s, 0, [&](int port) { ready.set_value(port); }); });
  const int port = port_future.get();
  REQUIRE(port > 0);

  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  const Json granted = Json::parse(exchange(fd, R"({"op":"request","tx":[205,205]})"));
  CHECK(granted["status"] == "granted");
  CHECK(Json::parse(exchange(fd, R"({"op":"request","tx":[115,115]})"))["status"] == "rejected");
  CHECK(Json::parse(exchange(fd, R"({"op":"shutdown"})"))["status"] == "bye");
  ::close(fd);
  server.join();
  CHECK(s.log.size() == 2);
}
