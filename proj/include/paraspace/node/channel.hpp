#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace paraspace::node {

/// Line-oriented duplex transport to a compute node.
class Channel {
public:
    virtual ~Channel() = default;

    /// Writes one line (a newline is appended). Throws NodeUnavailable when
    /// the peer is gone.
    virtual void send_line(std::string_view line) = 0;

    /// Next line without its terminator. nullopt means end of stream.
    /// Throws NodeUnavailable on timeout or cancellation.
    virtual std::optional<std::string> receive_line(
        std::optional<std::chrono::milliseconds> timeout) = 0;

    virtual void close() = 0;
    virtual bool is_open() const = 0;

    /// Makes a blocked receive_line return promptly with NodeUnavailable.
    void cancel() { cancelled_.store(true); }
    bool cancelled() const { return cancelled_.load(); }

private:
    std::atomic<bool> cancelled_{false};
};

/// Lines longer than this are treated as protocol noise.
inline constexpr std::size_t kMaxLineBytes = 64U << 20;

/// Channel over a pair of file descriptors, which it owns.
class FdChannel : public Channel {
public:
    FdChannel(int read_fd, int write_fd);
    ~FdChannel() override;

    FdChannel(const FdChannel&) = delete;
    FdChannel& operator=(const FdChannel&) = delete;

    void send_line(std::string_view line) override;
    std::optional<std::string> receive_line(std::optional<std::chrono::milliseconds> timeout) override;
    void close() override;
    bool is_open() const override { return read_fd_ >= 0; }

protected:
    void adopt(int read_fd, int write_fd) {
        read_fd_ = read_fd;
        write_fd_ = write_fd;
    }

private:
    int read_fd_;
    int write_fd_;
    std::string buffer_;
};

/// Spawns `argv` with its stdin/stdout connected to the channel. The child
/// is killed and reaped when the channel closes.
class ProcessChannel : public FdChannel {
public:
    explicit ProcessChannel(const std::vector<std::string>& argv);
    ~ProcessChannel() override;

    void close() override;
    /// SIGKILL the child; in-flight requests see end of stream.
    void kill();
    int pid() const noexcept { return pid_; }

private:
    void reap();

    int pid_ = -1;
};

/// Throws NodeUnavailable when the connection fails.
std::unique_ptr<Channel> connect_tcp(const std::string& host, int port,
                                     std::chrono::milliseconds timeout = std::chrono::seconds(10));

} // namespace paraspace::node
