// Loopback endpoint for the line-JSON generator protocol. Answers each
// request deterministically by echoing the prompt features back. Failure
// modes for exercising client error paths are selectable via --mode.
//
//   echo_generator [--mode normal|no-version|malformed|slow|close] [--tcp PORT]
//
// In --tcp mode it binds the given port (0 picks one), prints "PORT=<n>"
// on stdout, and serves a single connection.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <json.hpp>

using nlohmann::json;

namespace {

std::string handle(const std::string& line, const std::string& mode) {
    if (mode == "malformed") return "this is not json {{{";
    json req = json::parse(line, nullptr, false);
    if (req.is_discarded()) return R"({"error":"bad request"})";

    std::string prompt = req.value("prompt_text", "");
    std::vector<double> features = req.value("prompt_features", std::vector<double>{});
    std::uint64_t seed = req.value("seed", std::uint64_t{0});

    std::vector<double> reversed(features.rbegin(), features.rend());
    json resp{
        {"version", 1},
        {"variants",
         json::array({
             json{{"text", "echo-a s" + std::to_string(seed) + " " + prompt.substr(0, 40)},
                  {"features", features}},
             json{{"text", "echo-b s" + std::to_string(seed) + " " + prompt.substr(0, 40)},
                  {"features", reversed}},
         })},
    };
    if (mode == "no-version") resp.erase("version");
    return resp.dump();
}

int serve_stream(std::istream& in, std::ostream& out, const std::string& mode) {
    std::string line;
    while (std::getline(in, line)) {
        if (mode == "close") return 0;
        if (mode == "slow") std::this_thread::sleep_for(std::chrono::seconds(30));
        out << handle(line, mode) << "\n" << std::flush;
    }
    return 0;
}

int serve_tcp(int port, const std::string& mode) {
    int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (lfd < 0) {
        std::perror("socket");
        return 1;
    }
    int one = 1;
    ::setsockopt(lfd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(lfd, 1) != 0) {
        std::perror("bind/listen");
        return 1;
    }
    socklen_t alen = sizeof addr;
    ::getsockname(lfd, reinterpret_cast<sockaddr*>(&addr), &alen);
    std::printf("PORT=%d\n", ntohs(addr.sin_port));
    std::fflush(stdout);

    int cfd = ::accept(lfd, nullptr, nullptr);
    if (cfd < 0) {
        std::perror("accept");
        return 1;
    }
    std::string buf;
    char chunk[4096];
    for (;;) {
        auto nl = buf.find('\n');
        if (nl != std::string::npos) {
            std::string line = buf.substr(0, nl);
            buf.erase(0, nl + 1);
            if (mode == "close") break;
            if (mode == "slow") std::this_thread::sleep_for(std::chrono::seconds(30));
            std::string resp = handle(line, mode) + "\n";
            size_t off = 0;
            while (off < resp.size()) {
                ssize_t w = ::write(cfd, resp.data() + off, resp.size() - off);
                if (w <= 0) break;
                off += static_cast<size_t>(w);
            }
            continue;
        }
        ssize_t r = ::read(cfd, chunk, sizeof chunk);
        if (r <= 0) break;
        buf.append(chunk, static_cast<size_t>(r));
    }
    ::close(cfd);
    ::close(lfd);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::string mode = "normal";
    int tcp_port = -1;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--mode" && i + 1 < argc) {
            mode = argv[++i];
        } else if (arg == "--tcp" && i + 1 < argc) {
            tcp_port = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: echo_generator [--mode M] [--tcp PORT]\n");
            return 2;
        }
    }
    if (tcp_port >= 0) return serve_tcp(tcp_port, mode);
    return serve_stream(std::cin, std::cout, mode);
}
