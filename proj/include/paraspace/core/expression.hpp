#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace paraspace::core {

/// Parsed arithmetic over column names: + - * /, unary minus, parentheses,
/// numeric literals. Identifiers are [A-Za-z_][A-Za-z0-9_.]*.
class ExpressionProgram {
public:
    /// Throws ParseError with the offending position.
    static std::shared_ptr<const ExpressionProgram> parse(std::string_view text);

    const std::string& text() const noexcept { return text_; }
    const std::vector<std::string>& columns() const noexcept { return columns_; }

    /// nullopt when an input is missing or the result is not finite.
    std::optional<double> evaluate(
        const std::function<std::optional<double>(const std::string&)>& lookup) const;

    struct Node;

private:
    std::string text_;
    std::vector<std::string> columns_;
    std::shared_ptr<const Node> root_;
};

} // namespace paraspace::core
