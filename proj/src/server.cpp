#include "wavestopper/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <deque>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace wavestopper::service {

std::pair<std::string, unsigned short> parse_bind_address(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
    throw std::invalid_argument("bind address must look like host:port, got '" + text + "'");
  const std::string host = text.substr(0, colon);
  const std::string port_text = text.substr(colon + 1);
  std::size_t used = 0;
  unsigned long port = 0;
  try {
    port = std::stoul(port_text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != port_text.size() || port > 65535)
    throw std::invalid_argument("invalid port '" + port_text + "'");
  return {host, static_cast<unsigned short>(port)};
}

namespace {

class WsSession;

struct Pending {
  Command command;
  std::weak_ptr<WsSession> from;
};

/// State shared between network sessions and the stepping thread.
struct Shared {
  Mailbox<Pending> mailbox;
  std::size_t client_queue = 64;
  std::string hello;

  std::mutex sessions_mu;
  std::vector<std::weak_ptr<WsSession>> sessions;

  std::mutex snapshot_mu;
  std::string snapshot_json;
  std::string health_json;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Shared& shared) : ws_(std::move(socket)), shared_(shared) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  /// Thread-safe. Frames are droppable under backpressure; replies are not.
  void send(std::shared_ptr<const std::string> msg, bool droppable) {
    net::post(ws_.get_executor(), [self = shared_from_this(), msg = std::move(msg), droppable] {
      self->enqueue(msg, droppable);
    });
  }

 private:
  struct Outgoing {
    std::shared_ptr<const std::string> msg;
    bool droppable;
  };

  void on_accept(beast::error_code ec) {
    if (ec) return;
    {
      std::lock_guard lock(shared_.sessions_mu);
      shared_.sessions.push_back(weak_from_this());
    }
    enqueue(std::make_shared<const std::string>(shared_.hello), false);
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    auto parsed = parse_command(text);
    if (auto* err = std::get_if<ParseError>(&parsed)) {
      const Reply reply = Reject{err->client_id, err->seq, err->reason};
      enqueue(std::make_shared<const std::string>(to_json(reply).dump()), false);
    } else {
      shared_.mailbox.post({std::get<Command>(std::move(parsed)), weak_from_this()});
    }
    do_read();
  }

  void enqueue(std::shared_ptr<const std::string> msg, bool droppable) {
    if (droppable) {
      std::size_t frames = 0;
      for (std::size_t i = writing_ ? 1 : 0; i < queue_.size(); ++i) frames += queue_[i].droppable;
      if (frames >= shared_.client_queue) {
        // Drop the oldest queued frame that is not in flight; order is kept.
        for (auto it = queue_.begin() + (writing_ ? 1 : 0); it != queue_.end(); ++it)
          if (it->droppable) {
            queue_.erase(it);
            break;
          }
      }
    }
    queue_.push_back({std::move(msg), droppable});
    if (!writing_) do_write();
  }

  void do_write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front().msg),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) return;
    queue_.pop_front();
    if (!queue_.empty()) do_write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  std::deque<Outgoing> queue_;
  bool writing_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Shared& shared)
      : stream_(std::move(socket)), shared_(shared) {}

  void run() {
    net::dispatch(stream_.get_executor(),
                  beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;

    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), shared_)->run(std::move(req_));
        return;
      }
      respond(http::status::not_found, R"({"error":"websocket endpoint is /ws"})");
      return;
    }
    if (req_.method() != http::verb::get) {
      respond(http::status::method_not_allowed, R"({"error":"only GET is supported"})");
      return;
    }
    std::string body;
    if (req_.target() == "/snapshot") {
      std::lock_guard lock(shared_.snapshot_mu);
      body = shared_.snapshot_json;
    } else if (req_.target() == "/health") {
      std::lock_guard lock(shared_.snapshot_mu);
      body = shared_.health_json;
    } else {
      respond(http::status::not_found, R"({"error":"not found"})");
      return;
    }
    respond(http::status::ok, std::move(body));
  }

  void respond(http::status status, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::content_type, "application/json");
    res->keep_alive(req_.keep_alive());
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res,
                      [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (!res->keep_alive()) {
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
                          return;
                        }
                        self->do_read();
                      });
  }

  beast::tcp_stream stream_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

std::string hello_message(const SimConfig& c, const SessionOptions& o) {
  const auto g = switching_region_geometry(c.fs);
  json j = {{"type", "hello"},
            {"schema_version", kSchemaVersion},
            {"ring_length", c.ring_length},
            {"n_vehicles", c.n_vehicles},
            {"av_index", c.av_index},
            {"dt_sim", c.dt_sim},
            {"frame_rate", o.frame_rate},
            {"followerstopper", {{"omega", c.fs.omega}, {"alpha", c.fs.alpha}}},
            {"boundaries", {{"v_rel", g.v_rel}, {"d1", g.d[0]}, {"d2", g.d[1]}, {"d3", g.d[2]}}}};
  return j.dump();
}

}  // namespace

struct Server::Impl {
  Impl(SimConfig config, std::optional<SetpointSchedule> schedule, ServerOptions options)
      : opts(std::move(options)),
        session(config, std::move(schedule), opts.session),
        acceptor(ioc),
        signals(ioc) {
    shared.client_queue = opts.client_queue;
    shared.hello = hello_message(config, opts.session);
    publish_snapshot(session.snapshot());

    beast::error_code ec;
    const auto address = net::ip::make_address(opts.bind_address, ec);
    if (ec) throw std::runtime_error("invalid bind address '" + opts.bind_address + "'");
    const tcp::endpoint ep(address, opts.port);
    acceptor.open(ep.protocol(), ec);
    if (!ec) acceptor.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor.bind(ep, ec);
    if (!ec) acceptor.listen(net::socket_base::max_listen_connections, ec);
    if (ec)
      throw std::runtime_error("cannot listen on " + opts.bind_address + ":" +
                               std::to_string(opts.port) + ": " + ec.message());
  }

  void do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket s) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(s), shared)->run();
      do_accept();
    });
  }

  void publish_snapshot(const Frame& f) {
    const std::string status = session.halted() ? "halted" : session.paused() ? "paused" : "running";
    json health = {{"status", status}, {"t", f.t}, {"epoch", f.epoch}};
    health["mode"] = f.av ? json(std::string(to_string(f.av->mode))) : json(nullptr);
    if (session.halted()) health["collision"] = session.simulator().collision()->describe();
    std::lock_guard lock(shared.snapshot_mu);
    shared.snapshot_json = to_json(f).dump();
    shared.health_json = health.dump();
  }

  void broadcast(const std::shared_ptr<const std::string>& msg) {
    std::lock_guard lock(shared.sessions_mu);
    auto& s = shared.sessions;
    s.erase(std::remove_if(s.begin(), s.end(), [](const auto& w) { return w.expired(); }), s.end());
    for (const auto& w : s)
      if (auto p = w.lock()) p->send(msg, true);
  }

  void step_loop() {
    using clock = std::chrono::steady_clock;
    auto wall0 = clock::now();
    double sim0 = session.simulator().time();
    auto rebase = [&] {
      wall0 = clock::now();
      sim0 = session.simulator().time();
    };
    constexpr auto idle = std::chrono::milliseconds(5);

    while (!stopping.load()) {
      auto pending = shared.mailbox.drain();
      if (!pending.empty()) {
        std::vector<std::pair<std::weak_ptr<WsSession>, Reply>> replies;
        for (auto& p : pending) replies.emplace_back(p.from, session.apply(p.command));
        rebase();
        publish_snapshot(session.snapshot());
        for (const auto& [from, reply] : replies)
          if (auto s = from.lock())
            s->send(std::make_shared<const std::string>(to_json(reply).dump()), false);
      }
      if (session.paused() || session.halted()) {
        std::this_thread::sleep_for(idle);
        rebase();
        continue;
      }
      if (opts.time_scale > 0.0) {
        const auto due = wall0 + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(
                                     (session.simulator().time() - sim0) / opts.time_scale));
        const auto now = clock::now();
        if (now < due) {
          std::this_thread::sleep_until(std::min(due, now + idle));
          continue;
        }
      }
      if (auto frame = session.advance()) {
        broadcast(std::make_shared<const std::string>(to_json(*frame).dump()));
        publish_snapshot(*frame);
      }
    }
  }

  ServerOptions opts;
  LiveSession session;  // touched only by the stepping thread after start()
  Shared shared;
  net::io_context ioc{1};
  tcp::acceptor acceptor;
  net::signal_set signals;
  std::thread io_thread;
  std::thread sim_thread;
  std::atomic<bool> stopping{false};
  std::atomic<bool> started{false};
  std::mutex done_mu;
  std::condition_variable done_cv;
  bool done = false;
};

Server::Server(SimConfig config, std::optional<SetpointSchedule> schedule, ServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(schedule), std::move(options))) {}

Server::~Server() { stop(); }

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::start() {
  if (impl_->started.exchange(true)) return;
  impl_->do_accept();
  impl_->io_thread = std::thread([this] { impl_->ioc.run(); });
  impl_->sim_thread = std::thread([this] { impl_->step_loop(); });
}

void Server::stop() {
  if (!impl_) return;
  impl_->stopping.store(true);
  impl_->ioc.stop();
  if (impl_->sim_thread.joinable()) impl_->sim_thread.join();
  if (impl_->io_thread.joinable()) impl_->io_thread.join();
  {
    std::lock_guard lock(impl_->done_mu);
    impl_->done = true;
  }
  impl_->done_cv.notify_all();
}

void Server::wait() {
  // SIGINT / SIGTERM end the wait.
  impl_->signals.add(SIGINT);
  impl_->signals.add(SIGTERM);
  std::atomic<bool> signalled{false};
  impl_->signals.async_wait([this, &signalled](beast::error_code ec, int) {
    if (ec) return;
    signalled = true;
    std::lock_guard lock(impl_->done_mu);
    impl_->done = true;
    impl_->done_cv.notify_all();
  });
  std::unique_lock lock(impl_->done_mu);
  impl_->done_cv.wait(lock, [this] { return impl_->done; });
  lock.unlock();
  if (signalled) stop();
}

}  // namespace wavestopper::service
