#include "paraspace/node/channel.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "paraspace/error.hpp"

extern char** environ;

namespace paraspace::node {
namespace {

constexpr auto kPollSlice = std::chrono::milliseconds(50);

Error unavailable(const std::string& message) {
    return Error(ErrorCode::node_unavailable, message);
}

void ignore_sigpipe() {
    static const bool once = [] {
        std::signal(SIGPIPE, SIG_IGN);
        return true;
    }();
    (void)once;
}

} // namespace

FdChannel::FdChannel(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {
    ignore_sigpipe();
}

FdChannel::~FdChannel() {
    FdChannel::close();
}

void FdChannel::send_line(std::string_view line) {
    if (write_fd_ < 0) {
        throw unavailable("channel is closed");
    }
    std::string data(line);
    data += '\n';
    std::size_t written = 0;
    while (written < data.size()) {
        const ssize_t n = ::write(write_fd_, data.data() + written, data.size() - written);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw unavailable(std::string("write to node failed: ") + std::strerror(errno));
        }
        written += static_cast<std::size_t>(n);
    }
}

std::optional<std::string> FdChannel::receive_line(std::optional<std::chrono::milliseconds> timeout) {
    const auto deadline = timeout ? std::chrono::steady_clock::now() + *timeout
                                  : std::chrono::steady_clock::time_point::max();
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            return line;
        }
        if (buffer_.size() > kMaxLineBytes) {
            buffer_.clear();
            throw Error(ErrorCode::protocol_error, "node line exceeds size limit");
        }
        if (read_fd_ < 0) {
            throw unavailable("channel is closed");
        }
        if (cancelled()) {
            throw unavailable("request cancelled");
        }
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            throw unavailable("timed out waiting for node");
        }
        const auto slice = std::min<std::chrono::steady_clock::duration>(kPollSlice, deadline - now);
        pollfd pfd{read_fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1,
                                 static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(slice).count()) + 1);
        if (ready < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw unavailable(std::string("poll failed: ") + std::strerror(errno));
        }
        if (ready == 0) {
            continue;
        }
        char chunk[65536];
        const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) {
                continue;
            }
            throw unavailable(std::string("read from node failed: ") + std::strerror(errno));
        }
        if (n == 0) {
            if (!buffer_.empty()) {
                // Final unterminated line.
                std::string line = std::move(buffer_);
                buffer_.clear();
                return line;
            }
            return std::nullopt;
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

void FdChannel::close() {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) {
        ::close(write_fd_);
    }
    if (read_fd_ >= 0) {
        ::close(read_fd_);
    }
    read_fd_ = -1;
    write_fd_ = -1;
}

namespace {

struct Pipes {
    int to_child[2];
    int from_child[2];
};

Pipes make_pipes() {
    Pipes p{};
    if (::pipe2(p.to_child, O_CLOEXEC) != 0) {
        throw unavailable(std::string("pipe failed: ") + std::strerror(errno));
    }
    if (::pipe2(p.from_child, O_CLOEXEC) != 0) {
        ::close(p.to_child[0]);
        ::close(p.to_child[1]);
        throw unavailable(std::string("pipe failed: ") + std::strerror(errno));
    }
    return p;
}

} // namespace

ProcessChannel::ProcessChannel(const std::vector<std::string>& argv)
    : FdChannel(-1, -1) {
    if (argv.empty()) {
        throw unavailable("no node command configured");
    }
    Pipes p = make_pipes();
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, p.to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, p.from_child[1], STDOUT_FILENO);

    std::vector<char*> args;
    for (const auto& a : argv) {
        args.push_back(const_cast<char*>(a.c_str()));
    }
    args.push_back(nullptr);
    pid_t pid = -1;
    const int rc = posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(p.to_child[0]);
    ::close(p.from_child[1]);
    if (rc != 0) {
        ::close(p.to_child[1]);
        ::close(p.from_child[0]);
        throw unavailable("cannot start node '" + argv[0] + "': " + std::strerror(rc));
    }
    pid_ = pid;
    adopt(p.from_child[0], p.to_child[1]);
}

ProcessChannel::~ProcessChannel() {
    ProcessChannel::close();
}

void ProcessChannel::close() {
    FdChannel::close();
    reap();
}

void ProcessChannel::kill() {
    if (pid_ > 0) {
        ::kill(pid_, SIGKILL);
    }
}

void ProcessChannel::reap() {
    if (pid_ <= 0) {
        return;
    }
    // Closed stdin asks the node to exit; give it a moment, then insist.
    for (int i = 0; i < 40; ++i) {
        int status = 0;
        const pid_t r = ::waitpid(pid_, &status, WNOHANG);
        if (r == pid_ || r < 0) {
            pid_ = -1;
            return;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ::kill(pid_, SIGKILL);
    int status = 0;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
}

std::unique_ptr<Channel> connect_tcp(const std::string& host, int port,
                                     std::chrono::milliseconds timeout) {
    ignore_sigpipe();
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string service = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
        throw unavailable("cannot resolve " + host + ": " + ::gai_strerror(rc));
    }
    int fd = -1;
    std::string last_error = "no addresses";
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC | SOCK_NONBLOCK, ai->ai_protocol);
        if (fd < 0) {
            last_error = std::strerror(errno);
            continue;
        }
        int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
        if (rc != 0 && errno == EINPROGRESS) {
            pollfd pfd{fd, POLLOUT, 0};
            rc = ::poll(&pfd, 1, static_cast<int>(timeout.count())) == 1 ? 0 : -1;
            int err = 0;
            socklen_t len = sizeof(err);
            if (rc == 0 && (::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) != 0 || err != 0)) {
                errno = err;
                rc = -1;
            }
        }
        if (rc == 0) {
            break;
        }
        last_error = std::strerror(errno);
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) {
        throw unavailable("cannot connect to " + host + ":" + service + ": " + last_error);
    }
    const int flags = ::fcntl(fd, F_GETFL);
    ::fcntl(fd, F_SETFL, flags & ~O_NONBLOCK);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    const int write_fd = ::dup(fd);
    return std::make_unique<FdChannel>(fd, write_fd);
}

} // namespace paraspace::node
