// Reference compute node: speaks the node protocol on stdio or TCP.

#include <cstdio>
#include <iostream>
#include <thread>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <CLI11.hpp>

#include "paraspace/error.hpp"
#include "paraspace/node/reference.hpp"

namespace {

int serve_tcp(const std::string& kind, const paraspace::node::NodeOptions& options, int port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(fd, 16) != 0) {
        std::perror("paraspace_node: listen");
        return 1;
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    std::cout << ntohs(addr.sin_port) << std::endl;
    for (;;) {
        const int conn = ::accept4(fd, nullptr, nullptr, SOCK_CLOEXEC);
        if (conn < 0) {
            continue;
        }
        std::thread([kind, options, conn] {
            auto node = paraspace::node::make_reference_node(kind, options);
            paraspace::node::serve(*node, conn, conn, options);
            ::close(conn);
        }).detach();
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reference compute node (sine or damped oscillator)"};
    std::string kind;
    int port = -1;
    int die_after = -1;
    paraspace::node::NodeOptions options;
    std::string artifact_dir = "runs";
    app.add_option("kind", kind, "sine or oscillator")->required()->check(CLI::IsMember({"sine", "oscillator"}));
    app.add_option("--tcp", port, "listen on this loopback port (0 picks one) instead of stdio");
    app.add_option("--artifact-dir", artifact_dir, "directory for stored solutions");
    app.add_option("--die-after", die_after, "exit abruptly on run N+1");
    app.add_option("--delay-ms", options.delay_ms, "sleep before answering each run");
    CLI11_PARSE(app, argc, argv);

    options.artifact_dir = artifact_dir;
    if (die_after >= 0) {
        options.die_after = die_after;
    }
    try {
        if (port >= 0) {
            return serve_tcp(kind, options, port);
        }
        auto node = paraspace::node::make_reference_node(kind, options);
        paraspace::node::serve(*node, STDIN_FILENO, STDOUT_FILENO, options);
    } catch (const paraspace::Error& e) {
        std::cerr << "paraspace_node: " << e.what() << '\n';
        return paraspace::exit_code(e.code());
    }
    return 0;
}
