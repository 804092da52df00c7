// Variant generation behind a pluggable binding: a deterministic in-process
// template stub, or an external process speaking a line-delimited JSON
// protocol over subprocess pipes or TCP. One in-flight request per binding.
#pragma once

#include <array>
#include <chrono>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <arpa/inet.h>
#include <cerrno>
#include <csignal>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "rlab/common.hpp"
#include "rlab/config.hpp"
#include "rlab/rng.hpp"
#include "rlab/variants.hpp"

namespace rlab {

inline constexpr int kProtocolVersion = 1;

struct VariantPair {
    Variant a, b;
};

inline std::size_t variant_raw_dim(std::size_t emphasis_dim) {
    return kKnobOneHotDim + emphasis_dim + kVariantPerturbDim;
}

// -------------------------------------------------------------- stub text

inline const char* tone_phrase(Tone t) {
    switch (t) {
        case Tone::Urgent: return "Act now before time runs out";
        case Tone::Friendly: return "Hey there, we picked these for you";
        case Tone::Neutral: return "Here is our latest selection";
    }
    return "";
}

inline const char* framing_phrase(Framing f) {
    switch (f) {
        case Framing::Discount: return "save 20% at checkout";
        case Framing::Scarcity: return "only 3 left in stock";
        case Framing::SocialProof: return "trusted by 10,000 shoppers";
    }
    return "";
}

inline constexpr const char* kLongFormSuffix =
    " Free shipping on every order and easy returns, always.";

inline constexpr std::array<const char*, 6> kDefaultStubTemplates = {
    "{tone} - {framing}.",
    "{tone}: {framing} on your favorites.",
    "Your picks are in. {tone}, {framing}.",
    "{framing} today. {tone}.",
    "{tone}! Plus {framing} for members.",
    "Don't miss it: {tone}, with {framing}.",
};

struct StubTemplates {
    std::vector<std::string> lines;

    static StubTemplates defaults() {
        StubTemplates t;
        t.lines.assign(kDefaultStubTemplates.begin(), kDefaultStubTemplates.end());
        return t;
    }

    static StubTemplates from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open template file: " + path);
        StubTemplates t;
        std::string line;
        long line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string s = detail::trim(line);
            if (s.empty() || s[0] == '#') continue;
            if (s.find("{tone}") == std::string::npos)
                throw ParseError("template missing {tone} placeholder", line_no, -1);
            if (s.find("{framing}") == std::string::npos)
                throw ParseError("template missing {framing} placeholder", line_no, -1);
            for (const auto& prev : t.lines)
                if (prev == s) throw ParseError("duplicate template", line_no, -1);
            t.lines.push_back(s);
        }
        if (t.lines.size() < 2)
            throw ParseError("template file needs at least 2 templates, got " +
                                 std::to_string(t.lines.size()),
                             line_no, -1);
        return t;
    }
};

namespace detail {
inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}
}  // namespace detail

inline std::string render_stub_text(const std::string& tmpl, const PromptParams& params) {
    std::string s = detail::replace_all(tmpl, "{tone}", tone_phrase(params.tone));
    s = detail::replace_all(s, "{framing}", framing_phrase(params.framing));
    if (params.length == PromptLength::Long) s += kLongFormSuffix;
    return s;
}

inline Vec stub_raw_features(const PromptParams& params, std::uint64_t perturb_seed) {
    Vec raw = params.knob_features();
    Rng r(perturb_seed);
    for (std::size_t i = 0; i < kVariantPerturbDim; ++i) raw.push_back(r.uniform(-0.1, 0.1));
    return raw;
}

inline VariantPair stub_generate_pair(const StubTemplates& templates, const VariantEmbedder& embedder,
                                      const Prompt& prompt, std::uint64_t seed) {
    const std::size_t n = templates.lines.size();
    if (n < 2) throw ContractError("stub generator needs at least 2 templates");
    const std::uint64_t ha = hash_str64(prompt.text + "|" + std::to_string(seed) + "|A");
    const std::uint64_t hb = hash_str64(prompt.text + "|" + std::to_string(seed) + "|B");
    const std::size_t ta = static_cast<std::size_t>(ha % n);
    const std::size_t tb = (ta + 1 + static_cast<std::size_t>(hb % (n - 1))) % n;

    auto make = [&](Arm id, std::size_t tmpl, std::uint64_t h) {
        Variant v;
        v.id = id;
        v.text = render_stub_text(templates.lines[tmpl], prompt.params);
        v.raw = stub_raw_features(prompt.params, h);
        v.embedding = embedder.embed(v.text, v.raw);
        return v;
    };
    return {make(Arm::A, ta, ha), make(Arm::B, tb, hb)};
}

// ---------------------------------------------------------- wire protocol

inline std::string payload_excerpt(const std::string& s) {
    constexpr std::size_t kMax = 160;
    std::string out;
    for (std::size_t i = 0; i < s.size() && i < kMax; ++i) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        if (c == '\n' || c == '\r' || c == '\t')
            out += ' ';
        else if (c < 0x20)
            out += '?';
        else
            out += static_cast<char>(c);
    }
    if (s.size() > kMax) out += "...";
    return out;
}

inline std::string protocol_request(const Prompt& prompt, int n_variants, std::uint64_t seed) {
    nlohmann::json j{{"version", kProtocolVersion},
                     {"prompt_text", prompt.text},
                     {"prompt_features", prompt.features},
                     {"n_variants", n_variants},
                     {"seed", seed}};
    return j.dump();
}

inline VariantPair parse_protocol_response(const std::string& line, const VariantEmbedder& embedder) {
    auto bad = [&](const std::string& why) -> ProtocolError {
        return ProtocolError("generator reply " + why + ": " + payload_excerpt(line));
    };
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw bad("is not a JSON object");
    if (!j.contains("version")) throw bad("is missing \"version\"");
    if (!j["version"].is_number_integer() || j["version"].get<int>() != kProtocolVersion)
        throw bad("has unsupported version");
    if (!j.contains("variants") || !j["variants"].is_array() || j["variants"].size() != 2)
        throw bad("must carry exactly 2 variants");

    VariantPair pair;
    Variant* slots[2] = {&pair.a, &pair.b};
    for (int k = 0; k < 2; ++k) {
        const auto& jv = j["variants"][k];
        if (!jv.is_object() || !jv.contains("text") || !jv["text"].is_string() ||
            !jv.contains("features") || !jv["features"].is_array())
            throw bad("variant " + std::to_string(k) + " is malformed");
        Variant& v = *slots[k];
        v.id = k == 0 ? Arm::A : Arm::B;
        v.text = jv["text"].get<std::string>();
        if (v.text.empty()) throw bad("variant " + std::to_string(k) + " has empty text");
        v.raw.clear();
        for (const auto& f : jv["features"]) {
            if (!f.is_number()) throw bad("variant features must be numbers");
            v.raw.push_back(f.get<double>());
        }
        if (v.raw.size() != embedder.raw_dim())
            throw bad("variant features have dim " + std::to_string(v.raw.size()) + ", expected " +
                      std::to_string(embedder.raw_dim()));
        if (!all_finite(v.raw)) throw bad("variant features must be finite");
        v.embedding = embedder.embed(v.text, v.raw);
    }
    if (pair.a.text == pair.b.text) throw bad("carries two identical variants");
    return pair;
}

// ------------------------------------------------------------- transports

namespace detail {

inline void ignore_sigpipe_once() {
    // a dead generator process must surface as EPIPE, not kill us
    static std::once_flag flag;
    std::call_once(flag, [] { std::signal(SIGPIPE, SIG_IGN); });
}

class Deadline {
  public:
    explicit Deadline(int timeout_ms)
        : end_(std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms)) {}
    int remaining_ms() const {
        auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                        end_ - std::chrono::steady_clock::now())
                        .count();
        return left < 0 ? 0 : static_cast<int>(left);
    }
    bool expired() const { return remaining_ms() == 0; }

  private:
    std::chrono::steady_clock::time_point end_;
};

// One line out, one line in, over a pair of fds, bounded by a deadline.
class LineChannel {
  public:
    LineChannel(int read_fd, int write_fd) : rfd_(read_fd), wfd_(write_fd) {}

    void send_line(const std::string& body, Deadline& dl) {
        std::string msg = body;
        msg += '\n';
        std::size_t off = 0;
        while (off < msg.size()) {
            if (dl.expired())
                throw GeneratorUnavailableError("generator request timed out while sending");
            pollfd p{wfd_, POLLOUT, 0};
            int pr = ::poll(&p, 1, dl.remaining_ms());
            if (pr < 0 && errno != EINTR)
                throw GeneratorUnavailableError(std::string("generator poll failed: ") +
                                                std::strerror(errno));
            if (pr <= 0) continue;
            ssize_t w = ::write(wfd_, msg.data() + off, msg.size() - off);
            if (w < 0) {
                if (errno == EINTR || errno == EAGAIN) continue;
                throw GeneratorUnavailableError(std::string("generator endpoint closed (write: ") +
                                                std::strerror(errno) + ")");
            }
            off += static_cast<std::size_t>(w);
        }
    }

    std::string recv_line(Deadline& dl) {
        for (;;) {
            auto nl = buf_.find('\n');
            if (nl != std::string::npos) {
                std::string line = buf_.substr(0, nl);
                buf_.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return line;
            }
            if (dl.expired())
                throw GeneratorUnavailableError("generator reply timed out");
            pollfd p{rfd_, POLLIN, 0};
            int pr = ::poll(&p, 1, dl.remaining_ms());
            if (pr < 0 && errno != EINTR)
                throw GeneratorUnavailableError(std::string("generator poll failed: ") +
                                                std::strerror(errno));
            if (pr <= 0) continue;
            char chunk[4096];
            ssize_t r = ::read(rfd_, chunk, sizeof chunk);
            if (r < 0) {
                if (errno == EINTR || errno == EAGAIN) continue;
                throw GeneratorUnavailableError(std::string("generator endpoint closed (read: ") +
                                                std::strerror(errno) + ")");
            }
            if (r == 0) throw GeneratorUnavailableError("generator endpoint closed the stream");
            buf_.append(chunk, static_cast<std::size_t>(r));
        }
    }

  private:
    int rfd_, wfd_;
    std::string buf_;
};

inline std::vector<std::string> split_command(const std::string& command) {
    std::vector<std::string> argv;
    std::string cur;
    for (char c : command) {
        if (c == ' ' || c == '\t') {
            if (!cur.empty()) argv.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) argv.push_back(cur);
    return argv;
}

class SubprocessEndpoint {
  public:
    explicit SubprocessEndpoint(const std::string& command) {
        ignore_sigpipe_once();
        std::vector<std::string> args = split_command(command);
        if (args.empty()) throw ConfigError("generator.command is empty");

        int to_child[2], from_child[2], exec_err[2];
        if (::pipe(to_child) != 0 || ::pipe(from_child) != 0 || ::pipe2(exec_err, O_CLOEXEC) != 0)
            throw GeneratorUnavailableError(std::string("pipe failed: ") + std::strerror(errno));

        pid_ = ::fork();
        if (pid_ < 0) throw GeneratorUnavailableError(std::string("fork failed: ") + std::strerror(errno));
        if (pid_ == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            ::close(exec_err[0]);
            std::vector<char*> cargv;
            for (auto& a : args) cargv.push_back(a.data());
            cargv.push_back(nullptr);
            ::execvp(cargv[0], cargv.data());
            int err = errno;
            [[maybe_unused]] ssize_t n = ::write(exec_err[1], &err, sizeof err);
            ::_exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        ::close(exec_err[1]);
        wfd_ = to_child[1];
        rfd_ = from_child[0];

        int err = 0;
        ssize_t n = ::read(exec_err[0], &err, sizeof err);
        ::close(exec_err[0]);
        if (n > 0) {
            close_fds();
            ::waitpid(pid_, nullptr, 0);
            pid_ = -1;
            throw GeneratorUnavailableError("cannot launch generator '" + args[0] +
                                            "': " + std::strerror(err));
        }
        channel_ = std::make_unique<LineChannel>(rfd_, wfd_);
    }

    SubprocessEndpoint(const SubprocessEndpoint&) = delete;
    SubprocessEndpoint& operator=(const SubprocessEndpoint&) = delete;

    ~SubprocessEndpoint() {
        close_fds();
        if (pid_ > 0) {
            for (int i = 0; i < 20; ++i) {
                if (::waitpid(pid_, nullptr, WNOHANG) != 0) return;
                ::usleep(10 * 1000);
            }
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
        }
    }

    LineChannel& channel() { return *channel_; }

  private:
    void close_fds() {
        if (wfd_ >= 0) ::close(wfd_);
        if (rfd_ >= 0) ::close(rfd_);
        wfd_ = rfd_ = -1;
    }

    pid_t pid_ = -1;
    int rfd_ = -1, wfd_ = -1;
    std::unique_ptr<LineChannel> channel_;
};

class TcpEndpoint {
  public:
    TcpEndpoint(const std::string& host, int port, int timeout_ms) {
        ignore_sigpipe_once();
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res);
        if (rc != 0)
            throw GeneratorUnavailableError("cannot resolve generator host '" + host +
                                            "': " + gai_strerror(rc));
        std::string last_err = "no addresses";
        for (addrinfo* ai = res; ai; ai = ai->ai_next) {
            int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_NONBLOCK, ai->ai_protocol);
            if (fd < 0) {
                last_err = std::strerror(errno);
                continue;
            }
            int cr = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
            if (cr != 0 && errno == EINPROGRESS) {
                pollfd p{fd, POLLOUT, 0};
                int pr = ::poll(&p, 1, timeout_ms);
                if (pr > 0) {
                    int soerr = 0;
                    socklen_t len = sizeof soerr;
                    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &soerr, &len);
                    cr = soerr == 0 ? 0 : -1;
                    if (soerr != 0) last_err = std::strerror(soerr);
                } else {
                    cr = -1;
                    last_err = pr == 0 ? "connect timed out" : std::strerror(errno);
                }
            } else if (cr != 0) {
                last_err = std::strerror(errno);
            }
            if (cr == 0) {
                fd_ = fd;
                break;
            }
            ::close(fd);
        }
        ::freeaddrinfo(res);
        if (fd_ < 0)
            throw GeneratorUnavailableError("cannot connect to generator at " + host + ":" +
                                            std::to_string(port) + ": " + last_err);
        channel_ = std::make_unique<LineChannel>(fd_, fd_);
    }

    TcpEndpoint(const TcpEndpoint&) = delete;
    TcpEndpoint& operator=(const TcpEndpoint&) = delete;
    ~TcpEndpoint() {
        if (fd_ >= 0) ::close(fd_);
    }

    LineChannel& channel() { return *channel_; }

  private:
    int fd_ = -1;
    std::unique_ptr<LineChannel> channel_;
};

}  // namespace detail

// ----------------------------------------------------------------- binding

class GeneratorBinding {
  public:
    static GeneratorBinding make_stub(VariantEmbedder embedder,
                                      StubTemplates templates = StubTemplates::defaults()) {
        GeneratorBinding b(GenMode::Stub, std::move(embedder));
        b.templates_ = std::move(templates);
        return b;
    }

    static GeneratorBinding make_subprocess(const std::string& command, int timeout_ms,
                                            VariantEmbedder embedder) {
        GeneratorBinding b(GenMode::External, std::move(embedder));
        b.timeout_ms_ = timeout_ms;
        b.proc_ = std::make_unique<detail::SubprocessEndpoint>(command);
        return b;
    }

    static GeneratorBinding make_tcp(const std::string& host, int port, int timeout_ms,
                                     VariantEmbedder embedder) {
        GeneratorBinding b(GenMode::External, std::move(embedder));
        b.timeout_ms_ = timeout_ms;
        b.tcp_ = std::make_unique<detail::TcpEndpoint>(host, port, timeout_ms);
        return b;
    }

    GeneratorBinding(GeneratorBinding&&) = default;
    GeneratorBinding& operator=(GeneratorBinding&&) = default;

    GenMode mode() const { return mode_; }
    const VariantEmbedder& embedder() const { return embedder_; }
    const StubTemplates& templates() const { return templates_; }

    VariantPair generate_pair(const Prompt& prompt, std::uint64_t seed) {
        if (mode_ == GenMode::Stub) return stub_generate_pair(templates_, embedder_, prompt, seed);
        detail::LineChannel& ch = proc_ ? proc_->channel() : tcp_->channel();
        detail::Deadline dl(timeout_ms_);
        ch.send_line(protocol_request(prompt, 2, seed), dl);
        std::string reply = ch.recv_line(dl);
        return parse_protocol_response(reply, embedder_);
    }

  private:
    GeneratorBinding(GenMode mode, VariantEmbedder embedder)
        : mode_(mode), embedder_(std::move(embedder)) {}

    GenMode mode_;
    VariantEmbedder embedder_;
    StubTemplates templates_;
    int timeout_ms_ = 2000;
    std::unique_ptr<detail::SubprocessEndpoint> proc_;
    std::unique_ptr<detail::TcpEndpoint> tcp_;
};

// Builds the binding described by the config; embeddings are seeded per run.
inline GeneratorBinding make_generator(const RunConfig& cfg, std::uint64_t run_seed) {
    VariantEmbedder embedder(cfg.d_e, variant_raw_dim(cfg.emphasis_dim),
                             run_seed ^ 0x7a5c'd1e9'4b3f'2087ULL);
    switch (cfg.gen_mode) {
        case GenMode::Stub: {
            StubTemplates t = cfg.templates_path.empty() ? StubTemplates::defaults()
                                                         : StubTemplates::from_file(cfg.templates_path);
            return GeneratorBinding::make_stub(std::move(embedder), std::move(t));
        }
        case GenMode::External:
            if (cfg.gen_transport == GenTransport::Subprocess)
                return GeneratorBinding::make_subprocess(cfg.gen_command, cfg.gen_timeout_ms,
                                                         std::move(embedder));
            return GeneratorBinding::make_tcp(cfg.gen_host, cfg.gen_port, cfg.gen_timeout_ms,
                                              std::move(embedder));
    }
    throw ConfigError("unknown generator mode");
}

}  // namespace rlab
