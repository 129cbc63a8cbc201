#include <gtest/gtest.h>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <map>
#include <string>
#include <thread>

#include "json.hpp"
#include "wavestopper/server.hpp"

using namespace wavestopper;
using namespace wavestopper::service;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

class WsClient {
 public:
  explicit WsClient(unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    net::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/ws");
  }
  ~WsClient() {
    beast::error_code ec;
    ws_.next_layer().close(ec);
  }

  json read() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }

  /// Reads until a message of the given type arrives; frames seen on the way
  /// are appended to `frames` when given.
  json read_until(const std::string& type, std::vector<json>* frames = nullptr) {
    for (;;) {
      json j = read();
      if (j["type"] == type) return j;
      if (frames && j["type"] == "frame") frames->push_back(j);
    }
  }

  void send(const json& j) { ws_.write(net::buffer(j.dump())); }
  void send_raw(const std::string& s) { ws_.write(net::buffer(s)); }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

std::pair<int, std::string> http_get(unsigned short port, const std::string& target,
                                     http::verb verb = http::verb::get) {
  net::io_context ioc;
  tcp::socket sock(ioc);
  tcp::resolver resolver(ioc);
  net::connect(sock, resolver.resolve("127.0.0.1", std::to_string(port)));
  http::request<http::string_body> req(verb, target, 11);
  req.set(http::field::host, "127.0.0.1");
  req.keep_alive(false);
  req.prepare_payload();
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  return {static_cast<int>(res.result_int()), res.body()};
}

json command(std::uint64_t seq, const std::string& kind) {
  return {{"type", "command"}, {"schema_version", 1}, {"client_id", "test"}, {"seq", seq},
          {"kind", kind}};
}

ServerOptions options(double time_scale, std::size_t queue = 64) {
  ServerOptions o;
  o.port = 0;
  o.time_scale = time_scale;
  o.client_queue = queue;
  return o;
}

}  // namespace

TEST(ParseBindAddress, Forms) {
  EXPECT_EQ(parse_bind_address("127.0.0.1:8080"), std::make_pair(std::string("127.0.0.1"),
                                                                 static_cast<unsigned short>(8080)));
  EXPECT_EQ(parse_bind_address("0.0.0.0:0").second, 0);
  EXPECT_THROW(parse_bind_address("8080"), std::invalid_argument);
  EXPECT_THROW(parse_bind_address("host:"), std::invalid_argument);
  EXPECT_THROW(parse_bind_address("host:70000"), std::invalid_argument);
  EXPECT_THROW(parse_bind_address("host:80x"), std::invalid_argument);
}

TEST(Server, HelloThenFrames) {
  Server server(SimConfig{}, SetpointSchedule::ring_experiment(), options(50.0));
  server.start();
  WsClient c(server.port());
  const json hello = c.read();
  EXPECT_EQ(hello["type"], "hello");
  EXPECT_EQ(hello["schema_version"], 1);
  EXPECT_EQ(hello["ring_length"], 260.0);
  EXPECT_EQ(hello["n_vehicles"], 22);
  EXPECT_EQ(hello["av_index"], 0);
  EXPECT_EQ(hello["frame_rate"], 20.0);
  EXPECT_EQ(hello["followerstopper"]["omega"], json({4.5, 5.25, 6.0}));
  const auto n = hello["boundaries"]["v_rel"].size();
  EXPECT_GT(n, 0u);
  EXPECT_EQ(hello["boundaries"]["d1"].size(), n);

  std::uint64_t last = 0;
  for (int i = 0; i < 5; ++i) {
    const json f = c.read();
    ASSERT_EQ(f["type"], "frame");
    EXPECT_EQ(f["vehicles"].size(), 22u);
    EXPECT_EQ(f["vehicles"][0]["kind"], "AV");
    EXPECT_EQ(f["av"]["mode"], "manual");
    const auto step = f["step"].get<std::uint64_t>();
    EXPECT_EQ(step % 5, 0u);
    EXPECT_GT(step, last);
    last = step;
  }
  server.stop();
}

TEST(Server, CommandsAckRejectAndDuplicate) {
  Server server(SimConfig{}, SetpointSchedule::ring_experiment(), options(20.0));
  server.start();
  WsClient c(server.port());
  c.read_until("hello");

  c.send(command(1, "pause"));
  const json ack = c.read_until("ack");
  EXPECT_EQ(ack["seq"], 1);
  EXPECT_EQ(ack["status"], "applied");
  EXPECT_EQ(ack["client_id"], "test");

  const auto [code, body] = http_get(server.port(), "/health");
  EXPECT_EQ(code, 200);
  EXPECT_EQ(json::parse(body)["status"], "paused");

  c.send(command(1, "resume"));
  EXPECT_EQ(c.read_until("ack")["status"], "duplicate");

  c.send_raw("{not json");
  const json rej = c.read_until("reject");
  EXPECT_EQ(rej["reason"], "malformed JSON");
  EXPECT_TRUE(rej["seq"].is_null());

  json bad = command(2, "set_max_speed");
  bad["v"] = -1.0;
  c.send(bad);
  const json rej2 = c.read_until("reject");
  EXPECT_EQ(rej2["seq"], 2);

  c.send(command(3, "fly"));
  EXPECT_NE(c.read_until("reject")["reason"].get<std::string>().find("fly"), std::string::npos);

  c.send(command(4, "resume"));
  EXPECT_EQ(c.read_until("ack")["status"], "applied");
  server.stop();
}

TEST(Server, SnapshotAndHealth) {
  Server server(SimConfig{}, SetpointSchedule::ring_experiment(), options(20.0));
  server.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  const auto [code, body] = http_get(server.port(), "/snapshot");
  ASSERT_EQ(code, 200);
  const auto snap = json::parse(body);
  EXPECT_EQ(snap["type"], "frame");
  EXPECT_EQ(snap["vehicles"].size(), 22u);
  const auto round = service::frame_from_json(snap);
  EXPECT_EQ(to_json(round), snap);

  const auto health = json::parse(http_get(server.port(), "/health").second);
  EXPECT_EQ(health["status"], "running");
  EXPECT_EQ(health["mode"], "manual");
  EXPECT_GE(health["t"].get<double>(), 0.0);

  EXPECT_EQ(http_get(server.port(), "/nope").first, 404);
  EXPECT_EQ(http_get(server.port(), "/health", http::verb::post).first, 405);
  server.stop();
}

TEST(Server, BusyPortThrows) {
  Server a(SimConfig{}, std::nullopt, options(1.0));
  ServerOptions o = options(1.0);
  o.port = a.port();
  EXPECT_THROW(Server(SimConfig{}, std::nullopt, o), std::runtime_error);
}

TEST(Server, StopIsIdempotent) {
  Server server(SimConfig{}, std::nullopt, options(1.0));
  server.start();
  server.stop();
  server.stop();
}

// Unpaced run through the scheduled engagement at 126 s.
TEST(Server, ScheduledEngagementFlipsMode) {
  Server server(SimConfig{}, SetpointSchedule::ring_experiment(), options(0.0, 100000));
  server.start();
  WsClient c(server.port());
  c.read_until("hello");
  bool saw_manual = false, saw_auto = false;
  for (;;) {
    const json f = c.read();
    if (f["type"] != "frame") continue;
    const double t = f["t"];
    const std::string mode = f["av"]["mode"];
    // The frame at exactly 126 s reports the step that ended there.
    if (t < 126.0 - 1e-6) {
      ASSERT_EQ(mode, "manual") << t;
      saw_manual = true;
    } else if (t > 126.0 + 1e-6) {
      ASSERT_EQ(mode, "autonomous") << t;
      ASSERT_FALSE(f["av"]["r"].is_null());
      saw_auto = true;
    }
    if (t > 127.0) break;
  }
  EXPECT_TRUE(saw_manual);
  EXPECT_TRUE(saw_auto);
  server.stop();
}

// Frames broadcast by the server equal an offline replay of the acked commands.
TEST(Server, FramesMatchOfflineReplay) {
  const SimConfig config;
  const auto schedule = SetpointSchedule::ring_experiment();
  Server server(config, schedule, options(40.0, 100000));
  server.start();
  WsClient c(server.port());
  c.read_until("hello");

  std::vector<json> frames;
  std::vector<AppliedCommand> log;
  auto record = [&](const json& cmd) {
    c.send(cmd);
    const json ack = c.read_until("ack", &frames);
    EXPECT_EQ(ack["status"], "applied");
    auto parsed = parse_command(cmd.dump());
    log.push_back({0, ack["step"].get<std::uint64_t>(), std::get<Command>(parsed)});
  };
  auto collect = [&](std::size_t n) {
    while (frames.size() < n) {
      const json j = c.read();
      if (j["type"] == "frame") frames.push_back(j);
    }
  };

  collect(10);
  record(command(1, "engage"));
  collect(frames.size() + 10);
  record(command(2, "pause"));
  json speed = command(3, "set_max_speed");
  speed["v"] = 7.5;
  record(speed);
  record(command(4, "resume"));
  collect(frames.size() + 20);
  record(command(5, "disengage"));
  collect(frames.size() + 10);
  server.stop();

  const auto end = frames.back()["step"].get<std::uint64_t>();
  const auto expected = replay(config, schedule, log, 0, end);
  std::map<std::uint64_t, std::string> by_step;
  for (const auto& s : expected) by_step[json::parse(s)["step"].get<std::uint64_t>()] = s;
  ASSERT_FALSE(frames.empty());
  for (const auto& f : frames) {
    const auto step = f["step"].get<std::uint64_t>();
    ASSERT_TRUE(by_step.count(step)) << step;
    EXPECT_EQ(f.dump(), by_step[step]) << "step " << step;
  }
}

// A client that stops reading loses frames, never replies.
TEST(Server, SlowClientDropsFramesButKeepsReplies) {
  Server server(SimConfig{}, std::nullopt, options(0.0, 4));
  server.start();
  WsClient c(server.port());
  c.read_until("hello");
  c.send(command(1, "engage"));
  std::this_thread::sleep_for(std::chrono::milliseconds(1500));
  c.send(command(2, "disengage"));

  std::vector<json> frames;
  const json a1 = c.read_until("ack", &frames);
  EXPECT_EQ(a1["seq"], 1);
  const json a2 = c.read_until("ack", &frames);
  EXPECT_EQ(a2["seq"], 2);
  server.stop();

  ASSERT_GE(frames.size(), 2u);
  bool gap = false;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const auto a = frames[i - 1]["step"].get<std::uint64_t>();
    const auto b = frames[i]["step"].get<std::uint64_t>();
    ASSERT_GT(b, a);
    if (b - a > 5) gap = true;
  }
  EXPECT_TRUE(gap);
}
