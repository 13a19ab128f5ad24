#pragma once

// Session service: line-delimited JSON over TCP. One thread per connection,
// one optional driver thread per continuously running session.

#include <condition_variable>
#include <deque>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "sci/loop.hpp"

namespace sci::service {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;
using nlohmann::json;

inline constexpr std::size_t kMaxLine = 1 << 20;
inline constexpr std::size_t kDefaultQueue = 64;

inline tcp::endpoint parse_endpoint(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) throw ConfigError("endpoint must be host:port, got '" + s + "'");
    boost::system::error_code ec;
    const auto addr = asio::ip::make_address(s.substr(0, colon), ec);
    if (ec) throw ConfigError("bad address in '" + s + "'");
    int port = 0;
    try {
        port = std::stoi(s.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("bad port in '" + s + "'");
    }
    if (port < 0 || port > 65535) throw ConfigError("bad port in '" + s + "'");
    return {addr, static_cast<unsigned short>(port)};
}

enum class State { running, stopped, finished };

inline std::string_view to_string(State s) {
    switch (s) {
        case State::running: return "running";
        case State::stopped: return "stopped";
        case State::finished: return "finished";
    }
    return "?";
}

/// Bounded drop-oldest queue feeding one subscriber connection.
class Subscriber {
public:
    Subscriber(std::uint64_t id, std::size_t capacity) : id_(id), cap_(std::max<std::size_t>(1, capacity)) {}

    std::uint64_t id() const { return id_; }

    void push(json msg) {
        {
            std::lock_guard lock(mu_);
            if (closed_) return;
            q_.push_back(std::move(msg));
            if (q_.size() > cap_) {
                q_.pop_front();
                ++dropped_;
            }
        }
        cv_.notify_one();
    }

    void close() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

    /// Next message to send; a gap notice comes first when messages were dropped.
    /// Empty once closed and drained.
    std::optional<json> pop() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return closed_ || !q_.empty() || dropped_ > 0; });
        if (dropped_ > 0) {
            json gap{{"type", "gap"}, {"dropped", dropped_}};
            dropped_ = 0;
            return gap;
        }
        if (q_.empty()) return std::nullopt;
        json m = std::move(q_.front());
        q_.pop_front();
        return m;
    }

private:
    std::uint64_t id_;
    std::size_t cap_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<json> q_;
    std::uint64_t dropped_ = 0;
    bool closed_ = false;
};

struct StartOptions {
    std::string preset;
    std::uint64_t seed = 42;
    bool single_step = false;
    std::uint64_t interval_ms = 0;
    std::string stream;  // recorded stream; empty: generate from the preset
    std::string audit;   // audit path; empty: <audit dir>/<id>.audit.ndjson
};

/// A live session plus its window source, audit sink and subscribers.
class Runner {
public:
    Runner(Preset p, loop::Bootstrap boot, std::string id, std::vector<sigsim::Window> recorded, StartOptions opt,
           const std::string& audit_path)
        : s_(std::move(p), opt.seed, std::move(boot), std::move(id)), recorded_(std::move(recorded)), opt_(std::move(opt)), audit_(audit_path) {
        if (!audit_) throw ConfigError("cannot write audit file " + audit_path);
        if (!opt_.single_step) driver_ = std::thread([this] { drive(); });
    }

    ~Runner() { stop(); }

    const std::string& id() const { return s_.id(); }

    /// Runs up to n cycles; returns how many ran.
    std::size_t step(std::size_t n) {
        std::size_t done = 0;
        for (; done < n; ++done)
            if (!cycle_once()) break;
        return done;
    }

    loop::Ack submit(const fb::Event& e) { return s_.submit(e); }

    json status() {
        std::lock_guard lock(mu_);
        return {{"ok", true},
                {"session", s_.id()},
                {"state", std::string(to_string(state_))},
                {"cycle", s_.cycles()},
                {"theta_version", s_.theta_version()},
                {"last_seq", last_seq_ ? json(*last_seq_) : json(nullptr)},
                {"remaining", remaining_locked()},
                {"cadence", opt_.single_step ? "step" : "continuous"},
                {"subscribers", subs_.size()}};
    }

    void stop() {
        {
            std::lock_guard lock(mu_);
            if (state_ == State::running) state_ = State::stopped;
        }
        wake_.notify_all();
        if (driver_.joinable() && driver_.get_id() != std::this_thread::get_id()) driver_.join();
        close_subscribers();
    }

    std::shared_ptr<Subscriber> subscribe(std::size_t capacity) {
        std::lock_guard lock(mu_);
        auto sub = std::make_shared<Subscriber>(next_sub_++, capacity);
        if (state_ != State::running) sub->close();
        else subs_.push_back(sub);
        return sub;
    }

    /// Idempotent.
    bool unsubscribe(std::uint64_t sub_id) {
        std::shared_ptr<Subscriber> found;
        {
            std::lock_guard lock(mu_);
            for (auto it = subs_.begin(); it != subs_.end(); ++it)
                if ((*it)->id() == sub_id) {
                    found = *it;
                    subs_.erase(it);
                    break;
                }
        }
        if (found) found->close();
        return static_cast<bool>(found);
    }

    State state() {
        std::lock_guard lock(mu_);
        return state_;
    }

private:
    std::size_t remaining_locked() const {
        if (!recorded_.empty()) return recorded_.size() - next_;
        return s_.preset().eval_windows - next_;
    }

    std::optional<sigsim::Window> next_window_locked() {
        if (remaining_locked() == 0) return std::nullopt;
        const std::size_t i = next_++;
        if (!recorded_.empty()) return recorded_[i];
        return preset_window(s_.preset(), s_.seed(), s_.preset().init_windows + i);
    }

    bool cycle_once() {
        std::unique_lock lock(mu_);
        if (state_ != State::running) return false;
        auto w = next_window_locked();
        if (!w) {
            state_ = State::finished;
            lock.unlock();
            close_subscribers();
            return false;
        }
        auto c = s_.cycle(*w);
        last_seq_ = w->seq;
        audit_ << c.audit.dump() << '\n';
        audit_.flush();
        json msg{{"type", "state"}, {"msg_seq", msg_seq_++}, {"record", std::move(c.audit)}};
        for (auto& sub : subs_) sub->push(msg);
        if (remaining_locked() == 0) {
            state_ = State::finished;
            lock.unlock();
            close_subscribers();
        }
        return true;
    }

    void close_subscribers() {
        std::vector<std::shared_ptr<Subscriber>> subs;
        {
            std::lock_guard lock(mu_);
            subs.swap(subs_);
        }
        for (auto& s : subs) s->close();
    }

    void drive() {
        while (cycle_once()) {
            if (opt_.interval_ms == 0) continue;
            std::unique_lock lock(mu_);
            wake_.wait_for(lock, std::chrono::milliseconds(opt_.interval_ms),
                           [&] { return state_ != State::running; });
        }
    }

    loop::Session s_;
    std::vector<sigsim::Window> recorded_;
    StartOptions opt_;
    std::ofstream audit_;
    std::mutex mu_;
    std::condition_variable wake_;
    State state_ = State::running;
    std::size_t next_ = 0;
    std::optional<std::uint64_t> last_seq_;
    std::uint64_t msg_seq_ = 0;
    std::uint64_t next_sub_ = 1;
    std::vector<std::shared_ptr<Subscriber>> subs_;
    std::thread driver_;
};

inline json error_reply(const std::string& msg) { return {{"ok", false}, {"error", msg}}; }

class Server {
public:
    Server(const tcp::endpoint& ep, std::filesystem::path audit_dir)
        : acceptor_(io_, ep), audit_dir_(std::move(audit_dir)) {}

    ~Server() { stop(); }

    tcp::endpoint local_endpoint() const { return acceptor_.local_endpoint(); }
    std::string endpoint() const {
        const auto ep = local_endpoint();
        return ep.address().to_string() + ":" + std::to_string(ep.port());
    }

    /// Accepts connections until stop().
    void run() {
        while (!stopping_) {
            auto sock = std::make_shared<tcp::socket>(io_);
            boost::system::error_code ec;
            acceptor_.accept(*sock, ec);
            if (stopping_) break;
            if (ec) {
                spdlog::warn("[service] accept failed: {}", ec.message());
                continue;
            }
            std::lock_guard lock(mu_);
            conns_.push_back(sock);
            threads_.emplace_back([this, sock] { serve(sock); });
        }
    }

    void stop() {
        if (stopping_.exchange(true)) return;
        {
            // wake the blocking accept
            boost::system::error_code ec;
            tcp::socket poke(io_);
            auto ep = local_endpoint();
            if (ep.address().is_unspecified()) ep.address(asio::ip::address_v4::loopback());
            poke.connect(ep, ec);
        }
        std::vector<std::shared_ptr<Runner>> runners;
        {
            std::lock_guard lock(mu_);
            for (auto& [id, r] : sessions_)
                if (r) runners.push_back(r);
        }
        for (auto& r : runners) r->stop();
        std::vector<std::thread> threads;
        {
            std::lock_guard lock(mu_);
            for (auto& w : conns_)
                if (auto s = w.lock()) {
                    boost::system::error_code ec;
                    s->shutdown(tcp::socket::shutdown_both, ec);
                }
            threads.swap(threads_);
        }
        for (auto& t : threads)
            if (t.joinable()) t.join();
        boost::system::error_code ec;
        acceptor_.close(ec);
    }

    /// Handles one request line; exposed for in-process use and tests.
    json handle(const std::string& line, std::shared_ptr<Subscriber>* sub = nullptr) {
        json req;
        try {
            req = json::parse(line);
        } catch (const json::parse_error& e) {
            auto r = error_reply(std::string("malformed JSON: ") + e.what());
            r["position"] = e.byte;
            return r;
        }
        if (!req.is_object() || !req.contains("op") || !req["op"].is_string())
            return error_reply("request must be an object with a string 'op'");
        json reply;
        try {
            reply = dispatch(req, sub);
        } catch (const fb::MalformedEvent& e) {
            reply = error_reply(std::string("malformed event: ") + e.what());
        } catch (const json::exception& e) {
            reply = error_reply(std::string("bad request: ") + e.what());
        } catch (const std::exception& e) {
            reply = error_reply(e.what());
        }
        if (req.contains("req")) reply["req"] = req["req"];
        return reply;
    }

    std::shared_ptr<Runner> find(const std::string& id) {
        std::lock_guard lock(mu_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) throw ConfigError("unknown session '" + id + "'");
        if (!it->second) throw ConfigError("session '" + id + "' is still starting");
        return it->second;
    }

private:
    json dispatch(const json& req, std::shared_ptr<Subscriber>* sub) {
        const auto op = req["op"].get<std::string>();
        if (op == "start") return start(req);
        if (op == "list") {
            std::lock_guard lock(mu_);
            json ids = json::array();
            for (const auto& [id, r] : sessions_) ids.push_back(id);
            return {{"ok", true}, {"sessions", ids}};
        }
        if (op == "unsubscribe") {
            const auto r = find(req.at("session").get<std::string>());
            const bool removed = r->unsubscribe(req.at("subscription").get<std::uint64_t>());
            return {{"ok", true}, {"removed", removed}};
        }
        const auto r = find(req.at("session").get<std::string>());
        if (op == "status") return r->status();
        if (op == "stop") {
            r->stop();
            auto st = r->status();
            return st;
        }
        if (op == "step") {
            const std::size_t n = req.value("n", std::size_t{1});
            const std::size_t ran = r->step(n);
            auto st = r->status();
            st["stepped"] = ran;
            return st;
        }
        if (op == "feedback") {
            if (!req.contains("event")) return error_reply("feedback needs an 'event' object");
            const auto ack = r->submit(fb::event_from_json(req["event"]));
            return {{"ok", true}, {"ack", {{"id", ack.id}, {"fresh", ack.fresh}, {"theta_version", ack.theta_version}}}};
        }
        if (op == "subscribe") {
            if (!sub) return error_reply("subscribe is only available on a socket connection");
            *sub = r->subscribe(req.value("queue", kDefaultQueue));
            return {{"ok", true}, {"session", r->id()}, {"subscription", (*sub)->id()}};
        }
        return error_reply("unknown op '" + op + "'");
    }

    json start(const json& req) {
        StartOptions o;
        o.preset = req.at("preset").get<std::string>();
        o.seed = req.value("seed", std::uint64_t{42});
        const auto cadence = req.value("cadence", std::string("continuous"));
        if (cadence == "step") o.single_step = true;
        else if (cadence != "continuous") return error_reply("cadence must be 'step' or 'continuous'");
        o.interval_ms = req.value("interval_ms", std::uint64_t{0});
        o.stream = req.value("stream", std::string());
        o.audit = req.value("audit", std::string());

        const Preset p = load_preset(o.preset);
        std::vector<sigsim::Window> recorded;
        if (!o.stream.empty()) {
            std::ifstream in(o.stream);
            if (!in) throw StreamError("cannot open stream " + o.stream);
            recorded = sigsim::read_stream(in).windows;
            if (recorded.empty()) throw StreamError("stream " + o.stream + " holds no windows");
        }

        std::string id = loop::session_id(p, o.seed);
        {
            std::lock_guard lock(mu_);
            const std::string base = id;
            for (int n = 2; sessions_.count(id); ++n) id = base + "-" + std::to_string(n);
            sessions_[id] = nullptr;  // reserve while bootstrapping
        }
        std::shared_ptr<Runner> runner;
        try {
            std::filesystem::path audit = o.audit;
            if (audit.empty()) {
                std::filesystem::create_directories(audit_dir_);
                audit = audit_dir_ / (id + ".audit.ndjson");
            }
            runner = std::make_shared<Runner>(p, loop::bootstrap(p, o.seed), id, std::move(recorded), o, audit.string());
        } catch (...) {
            std::lock_guard lock(mu_);
            sessions_.erase(id);
            throw;
        }
        {
            std::lock_guard lock(mu_);
            sessions_[id] = runner;
        }
        spdlog::info("[service] started session {}", id);
        return {{"ok", true}, {"session", id}, {"theta_version", 0}, {"state", "running"}};
    }

    void serve(std::shared_ptr<tcp::socket> sock) {
        asio::streambuf buf(kMaxLine);
        boost::system::error_code ec;
        auto send = [&](const json& j) {
            const std::string out = j.dump() + "\n";
            asio::write(*sock, asio::buffer(out), ec);
            return !ec;
        };
        while (!stopping_) {
            const std::size_t n = asio::read_until(*sock, buf, '\n', ec);
            if (ec) {
                if (ec == asio::error::not_found) send(error_reply("request line too long"));
                break;
            }
            std::string line(asio::buffers_begin(buf.data()), asio::buffers_begin(buf.data()) + n - 1);
            buf.consume(n);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::shared_ptr<Subscriber> sub;
            if (!send(handle(line, &sub))) break;
            if (sub) {
                // the connection now only streams state records
                while (auto m = sub->pop())
                    if (!send(*m)) break;
                send({{"type", "end"}});
                break;
            }
        }
        sock->shutdown(tcp::socket::shutdown_both, ec);
    }

    asio::io_context io_;
    tcp::acceptor acceptor_;
    std::filesystem::path audit_dir_;
    std::atomic<bool> stopping_{false};
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<Runner>> sessions_;
    std::vector<std::weak_ptr<tcp::socket>> conns_;
    std::vector<std::thread> threads_;
};

}  // namespace sci::service
