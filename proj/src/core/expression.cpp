#include "paraspace/core/expression.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <variant>

#include "paraspace/error.hpp"

namespace paraspace::core {

struct ExpressionProgram::Node {
    enum class Op { literal, column, negate, add, sub, mul, div };
    Op op = Op::literal;
    double value = 0.0;
    std::string column;
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;
};

namespace {

using Node = ExpressionProgram::Node;
using NodePtr = std::shared_ptr<const Node>;

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    NodePtr parse_all() {
        NodePtr root = parse_sum();
        skip_space();
        if (pos_ != text_.size()) {
            fail("unexpected character");
        }
        return root;
    }

    std::vector<std::string> columns;

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorCode::parse_error, "expression '" + std::string(text_) + "': " + what +
                                                " at position " + std::to_string(pos_));
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    static NodePtr binary(Node::Op op, NodePtr lhs, NodePtr rhs) {
        auto n = std::make_shared<Node>();
        n->op = op;
        n->lhs = std::move(lhs);
        n->rhs = std::move(rhs);
        return n;
    }

    NodePtr parse_sum() {
        NodePtr lhs = parse_product();
        for (;;) {
            if (accept('+')) {
                lhs = binary(Node::Op::add, lhs, parse_product());
            } else if (accept('-')) {
                lhs = binary(Node::Op::sub, lhs, parse_product());
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_product() {
        NodePtr lhs = parse_unary();
        for (;;) {
            if (accept('*')) {
                lhs = binary(Node::Op::mul, lhs, parse_unary());
            } else if (accept('/')) {
                lhs = binary(Node::Op::div, lhs, parse_unary());
            } else {
                return lhs;
            }
        }
    }

    NodePtr parse_unary() {
        if (accept('-')) {
            auto n = std::make_shared<Node>();
            n->op = Node::Op::negate;
            n->lhs = parse_unary();
            return n;
        }
        return parse_primary();
    }

    NodePtr parse_primary() {
        if (depth_ > 256) {
            fail("nesting too deep");
        }
        skip_space();
        if (pos_ >= text_.size()) {
            fail("unexpected end");
        }
        if (accept('(')) {
            ++depth_;
            NodePtr inner = parse_sum();
            --depth_;
            if (!accept(')')) {
                fail("expected ')'");
            }
            return inner;
        }
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            double value = 0.0;
            const char* begin = text_.data() + pos_;
            const auto [end, ec] = std::from_chars(begin, text_.data() + text_.size(), value);
            if (ec != std::errc()) {
                fail("bad number");
            }
            pos_ += static_cast<std::size_t>(end - begin);
            auto n = std::make_shared<Node>();
            n->value = value;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_' ||
                    text_[pos_] == '.')) {
                ++pos_;
            }
            auto n = std::make_shared<Node>();
            n->op = Node::Op::column;
            n->column = std::string(text_.substr(start, pos_ - start));
            if (std::find(columns.begin(), columns.end(), n->column) == columns.end()) {
                columns.push_back(n->column);
            }
            return n;
        }
        fail("unexpected character");
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    int depth_ = 0;
};

std::optional<double> eval(const Node& node,
                           const std::function<std::optional<double>(const std::string&)>& lookup) {
    using Op = Node::Op;
    switch (node.op) {
    case Op::literal:
        return node.value;
    case Op::column:
        return lookup(node.column);
    case Op::negate: {
        const auto v = eval(*node.lhs, lookup);
        return v ? std::optional<double>(-*v) : std::nullopt;
    }
    default:
        break;
    }
    const auto a = eval(*node.lhs, lookup);
    const auto b = eval(*node.rhs, lookup);
    if (!a || !b) {
        return std::nullopt;
    }
    switch (node.op) {
    case Op::add: return *a + *b;
    case Op::sub: return *a - *b;
    case Op::mul: return *a * *b;
    case Op::div: return *a / *b;
    default: return std::nullopt;
    }
}

} // namespace

std::shared_ptr<const ExpressionProgram> ExpressionProgram::parse(std::string_view text) {
    Parser parser(text);
    auto program = std::make_shared<ExpressionProgram>();
    program->root_ = parser.parse_all();
    program->columns_ = std::move(parser.columns);
    program->text_ = std::string(text);
    return program;
}

std::optional<double> ExpressionProgram::evaluate(
    const std::function<std::optional<double>(const std::string&)>& lookup) const {
    const auto v = eval(*root_, lookup);
    if (!v || !std::isfinite(*v)) {
        return std::nullopt;
    }
    return v;
}

} // namespace paraspace::core
