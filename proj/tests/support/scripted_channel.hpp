#pragma once

#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "paraspace/error.hpp"
#include "paraspace/node/channel.hpp"

namespace testing {

/// Channel that answers with canned lines and records what was sent.
class ScriptedChannel : public paraspace::node::Channel {
public:
    explicit ScriptedChannel(std::deque<std::string> replies) : replies_(std::move(replies)) {}

    void send_line(std::string_view line) override {
        if (!open_) {
            throw paraspace::Error(paraspace::ErrorCode::node_unavailable, "closed");
        }
        sent_->emplace_back(line);
    }

    std::optional<std::string> receive_line(std::optional<std::chrono::milliseconds>) override {
        if (!open_) {
            throw paraspace::Error(paraspace::ErrorCode::node_unavailable, "closed");
        }
        if (replies_.empty()) {
            return std::nullopt;
        }
        std::string line = std::move(replies_.front());
        replies_.pop_front();
        return line;
    }

    void close() override { open_ = false; }
    bool is_open() const override { return open_; }

    /// Survives the channel, which the client owns.
    std::shared_ptr<std::vector<std::string>> sent() const { return sent_; }

private:
    std::deque<std::string> replies_;
    std::shared_ptr<std::vector<std::string>> sent_ = std::make_shared<std::vector<std::string>>();
    bool open_ = true;
};

} // namespace testing
