#include "ocs/task_data.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace ocs {

namespace {

constexpr Index kMaxHierarchyItems = 4096;

[[noreturn]] void fail(const std::string& message) { throw Error("task_data", message); }

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write " + path.string());
    out << text;
}

// A whitespace-separated token and its 1-based column.
struct Token {
    std::string_view text;
    std::size_t column;
};

std::vector<Token> tokenize(std::string_view line, char extra_separator = '\0') {
    std::vector<Token> tokens;
    std::size_t i = 0;
    auto is_sep = [&](char c) { return c == ' ' || c == '\t' || c == '\r' || (extra_separator && c == extra_separator); };
    while (i < line.size()) {
        while (i < line.size() && is_sep(line[i])) ++i;
        if (i >= line.size()) break;
        const std::size_t start = i;
        while (i < line.size() && !is_sep(line[i])) ++i;
        tokens.push_back({line.substr(start, i - start), start + 1});
    }
    return tokens;
}

class LineReader {
public:
    LineReader(const std::string& text, std::string source) : text_(text), source_(std::move(source)) {}

    // Next non-blank, non-comment line; false at end of input.
    bool next(std::string_view& line) {
        while (pos_ <= text_.size()) {
            if (pos_ == text_.size()) {
                pos_ = text_.size() + 1;
                return false;
            }
            std::size_t end = text_.find('\n', pos_);
            if (end == std::string::npos) end = text_.size();
            line = std::string_view(text_).substr(pos_, end - pos_);
            pos_ = end + 1;
            ++line_no_;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string_view::npos || line[first] == '#') continue;
            return true;
        }
        return false;
    }

    [[noreturn]] void error(std::size_t column, const std::string& message) const {
        throw ParseError(source_, line_no_, column, message);
    }

    std::size_t line() const { return line_no_; }
    const std::string& source() const { return source_; }

private:
    const std::string& text_;
    std::string source_;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
};

double parse_double(const Token& tok, const LineReader& reader) {
    double value = 0.0;
    const char* first = tok.text.data();
    const char* last = first + tok.text.size();
    if (!tok.text.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) reader.error(tok.column, "not a number: '" + std::string(tok.text) + "'");
    return value;
}

Index parse_index(const Token& tok, const LineReader& reader) {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value);
    if (ec != std::errc() || ptr != tok.text.data() + tok.text.size() || value < 0)
        reader.error(tok.column, "not a non-negative integer: '" + std::string(tok.text) + "'");
    return static_cast<Index>(value);
}

Matrix read_matrix_body(LineReader& reader, Index rows, Index cols) {
    Matrix m(rows, cols);
    std::string_view line;
    for (Index r = 0; r < rows; ++r) {
        if (!reader.next(line)) reader.error(1, "unexpected end of file: expected " + std::to_string(rows) + " rows");
        const auto tokens = tokenize(line);
        if (static_cast<Index>(tokens.size()) != cols)
            reader.error(1, "ragged row: expected " + std::to_string(cols) + " values, found " +
                                std::to_string(tokens.size()));
        for (Index c = 0; c < cols; ++c) m(r, c) = parse_double(tokens[c], reader);
    }
    return m;
}

void append_matrix(std::string& out, const Matrix& m) {
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) {
            if (c) out += ' ';
            out += format_double(m(r, c));
        }
        out += '\n';
    }
}

} // namespace

void Dataset::validate() const {
    if (X.cols() != Y.cols())
        fail("X has " + std::to_string(X.cols()) + " columns but Y has " + std::to_string(Y.cols()));
    Index expected = 0;
    for (const auto& s : level_slices) {
        if (s.start != expected || s.end <= s.start)
            fail("level slices must be ordered, disjoint and non-empty; got " + format_slices(level_slices));
        expected = s.end;
    }
    if (expected != Y.rows())
        fail("level slices " + format_slices(level_slices) + " do not cover the " + std::to_string(Y.rows()) +
             " output rows");
    if (bias_augmented) {
        if (X.rows() == 0) fail("bias-augmented dataset has no inputs");
        const double v = X(0, 0);
        if (v == 0.0 || (X.row(0).array() != v).any()) fail("bias-augmented dataset must have a constant first input row");
    }
}

Dataset build_hierarchy(const HierarchySpec& spec) {
    if (spec.depth < 1 || spec.depth > 12) fail("hierarchy depth must be in [1, 12], got " + std::to_string(spec.depth));
    if (spec.branching < 2 || spec.branching > 64)
        fail("hierarchy branching must be in [2, 64], got " + std::to_string(spec.branching));
    Index items = 1;
    for (int l = 0; l < spec.depth; ++l) {
        items *= spec.branching;
        if (items > kMaxHierarchyItems)
            fail("hierarchy with branching " + std::to_string(spec.branching) + " and depth " +
                 std::to_string(spec.depth) + " exceeds " + std::to_string(kMaxHierarchyItems) + " items");
    }

    const bool root = spec.include_root && !spec.human_layout;
    const int first_level = root ? 0 : 1;

    Index outputs = 0;
    Index nodes = root ? 1 : spec.branching;
    for (int l = first_level; l <= spec.depth; ++l, nodes *= spec.branching) outputs += nodes;

    Dataset d;
    d.X = Matrix::Identity(items, items);
    d.Y = Matrix::Zero(outputs, items);
    Index row = 0;
    nodes = root ? 1 : spec.branching;
    for (int l = first_level; l <= spec.depth; ++l, nodes *= spec.branching) {
        const Index span = items / nodes;
        for (Index i = 0; i < items; ++i) d.Y(row + i / span, i) = 1.0;
        d.level_slices.push_back({row, row + nodes});
        row += nodes;
    }
    d.name = "hierarchy_d" + std::to_string(spec.depth) + "_b" + std::to_string(spec.branching) +
             (spec.human_layout ? "_human" : (root ? "_root" : ""));
    return d;
}

Dataset augment_bias(const Dataset& d, double feature_value) {
    if (d.bias_augmented) fail("dataset '" + d.name + "' is already bias-augmented");
    if (!(feature_value != 0.0) || !std::isfinite(feature_value)) fail("bias feature value must be finite and non-zero");
    Dataset out = d;
    out.X.resize(d.X.rows() + 1, d.X.cols());
    out.X.row(0).setConstant(feature_value);
    out.X.bottomRows(d.X.rows()) = d.X;
    out.bias_augmented = true;
    out.name = d.name + "_bias";
    return out;
}

Dataset build_imbalance_case() {
    Dataset d;
    // Samples: majority, majority, minority.
    d.X.resize(2, 3);
    d.X << 1, 1, 0,
           0, 0, 1;
    d.Y.resize(3, 3);
    d.Y << 1, 1, 0,
           0, 0, 1,
           0, 0, 1;
    d.level_slices = {{0, 1}, {1, 3}};
    d.name = "imbalance";
    return d;
}

Matrix correlated_inputs(const CorrelatedInputSpec& spec) {
    if (spec.samples < 1 || spec.input_dim < 1) fail("correlated inputs need positive sample count and input dimension");
    if (spec.shared_scale < 0.0 || spec.noise_scale < 0.0) fail("correlated input scales must be non-negative");
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix X = Matrix::Zero(spec.input_dim, spec.samples);
    if (!spec.orthogonalized) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
        for (Index i = 0; i < spec.samples; ++i)
            for (Index j = 0; j < spec.input_dim; ++j) X(j, i) = spec.shared_scale * inv + spec.noise_scale * inv * normal(rng);
        return X;
    }

    const Index block = spec.input_dim / spec.samples;
    if (block < 1)
        fail("orthogonalized inputs need input_dim >= samples (" + std::to_string(spec.input_dim) + " < " +
             std::to_string(spec.samples) + ")");
    const double inv = 1.0 / std::sqrt(static_cast<double>(block));
    for (Index i = 0; i < spec.samples; ++i)
        for (Index j = 0; j < block; ++j) X(i * block + j, i) = spec.shared_scale * inv + spec.noise_scale * inv * normal(rng);
    return X;
}

Dataset build_correlated(const CorrelatedInputSpec& spec, const Dataset& targets) {
    if (spec.samples != targets.samples())
        fail("correlated spec has " + std::to_string(spec.samples) + " samples but targets have " +
             std::to_string(targets.samples()));
    Dataset d = targets;
    d.X = correlated_inputs(spec);
    d.bias_augmented = false;
    d.name = targets.name + (spec.orthogonalized ? "_orthogonal" : "_correlated");
    return d;
}

Vector ocs_vector(const Dataset& d) { return d.Y.rowwise().mean(); }

Vector mean_input(const Dataset& d) { return d.X.rowwise().mean(); }

std::string format_dataset(const Dataset& d) {
    std::string out = "ocs-dataset 1\n";
    out += "name " + (d.name.empty() ? std::string("unnamed") : d.name) + "\n";
    out += std::string("bias_augmented ") + (d.bias_augmented ? "1" : "0") + "\n";
    out += "slices";
    for (const auto& s : d.level_slices) out += " " + std::to_string(s.start) + ":" + std::to_string(s.end);
    out += "\n";
    out += "X " + std::to_string(d.X.rows()) + " " + std::to_string(d.X.cols()) + "\n";
    append_matrix(out, d.X);
    out += "Y " + std::to_string(d.Y.rows()) + " " + std::to_string(d.Y.cols()) + "\n";
    append_matrix(out, d.Y);
    return out;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    d.validate();
    write_file(path, format_dataset(d));
}

Dataset parse_dataset(const std::string& text, const std::string& source, std::span<const LevelSlice> slices) {
    LineReader reader(text, source);
    std::string_view line;
    Dataset d;
    bool have_x = false, have_y = false, have_header = false;

    while (reader.next(line)) {
        const auto tokens = tokenize(line);
        const std::string_view key = tokens[0].text;
        if (!have_header) {
            if (key != "ocs-dataset" || tokens.size() != 2 || tokens[1].text != "1")
                reader.error(tokens[0].column, "expected header 'ocs-dataset 1'");
            have_header = true;
        } else if (key == "name") {
            d.name = tokens.size() > 1 ? std::string(line.substr(tokens[1].column - 1)) : "";
            while (!d.name.empty() && (d.name.back() == '\r' || d.name.back() == ' ')) d.name.pop_back();
        } else if (key == "bias_augmented") {
            if (tokens.size() != 2 || (tokens[1].text != "0" && tokens[1].text != "1"))
                reader.error(tokens[0].column, "bias_augmented expects 0 or 1");
            d.bias_augmented = tokens[1].text == "1";
        } else if (key == "slices") {
            d.level_slices.clear();
            for (std::size_t t = 1; t < tokens.size(); ++t) {
                const auto colon = tokens[t].text.find(':');
                if (colon == std::string_view::npos) reader.error(tokens[t].column, "slice must look like start:end");
                const Token a{tokens[t].text.substr(0, colon), tokens[t].column};
                const Token b{tokens[t].text.substr(colon + 1), tokens[t].column + colon + 1};
                d.level_slices.push_back({parse_index(a, reader), parse_index(b, reader)});
            }
        } else if (key == "X" || key == "Y") {
            if (tokens.size() != 3) reader.error(tokens[0].column, "matrix header must be '<X|Y> rows cols'");
            const Index rows = parse_index(tokens[1], reader);
            const Index cols = parse_index(tokens[2], reader);
            Matrix m = read_matrix_body(reader, rows, cols);
            if (key == "X") {
                d.X = std::move(m);
                have_x = true;
            } else {
                d.Y = std::move(m);
                have_y = true;
            }
        } else {
            reader.error(tokens[0].column, "unknown key '" + std::string(key) + "'");
        }
    }
    if (!have_header) throw ParseError(source, 1, 1, "empty dataset file");
    if (!have_x || !have_y) throw ParseError(source, reader.line(), 1, "dataset file must contain both X and Y");
    if (!slices.empty()) d.level_slices.assign(slices.begin(), slices.end());
    if (d.level_slices.empty() && d.Y.rows() > 0) d.level_slices = {{0, d.Y.rows()}};
    d.validate();
    return d;
}

Dataset load_dataset(const std::filesystem::path& path, std::span<const LevelSlice> slices) {
    return parse_dataset(read_file(path), path.string(), slices);
}

void write_matrix_csv(const Matrix& m, const std::filesystem::path& path) {
    std::string out;
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) {
            if (c) out += ',';
            out += format_double(m(r, c));
        }
        out += '\n';
    }
    write_file(path, out);
}

Matrix parse_matrix_csv(const std::string& text, const std::string& source) {
    LineReader reader(text, source);
    std::string_view line;
    std::vector<std::vector<double>> rows;
    while (reader.next(line)) {
        // Split on commas only; surrounding blanks are tolerated.
        std::vector<Token> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            std::string_view cell = line.substr(start, comma == std::string_view::npos ? line.size() - start : comma - start);
            std::size_t col = start + 1;
            while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) {
                cell.remove_prefix(1);
                ++col;
            }
            while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
            cells.push_back({cell, col});
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (!rows.empty() && cells.size() != rows.front().size())
            reader.error(1, "ragged row: expected " + std::to_string(rows.front().size()) + " values, found " +
                                std::to_string(cells.size()));
        std::vector<double> values;
        values.reserve(cells.size());
        for (const auto& c : cells) values.push_back(parse_double(c, reader));
        rows.push_back(std::move(values));
    }
    Matrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
    return m;
}

Matrix read_matrix_csv(const std::filesystem::path& path) { return parse_matrix_csv(read_file(path), path.string()); }

std::vector<LevelSlice> parse_slices(const std::string& text) {
    std::vector<LevelSlice> slices;
    const auto tokens = tokenize(text, ',');
    const std::string source = "<slices>";
    LineReader reader(text, source);
    std::string_view first_line;
    reader.next(first_line);
    for (const auto& tok : tokens) {
        const auto colon = tok.text.find(':');
        if (colon == std::string_view::npos) throw ParseError(source, 1, tok.column, "slice must look like start:end");
        const Token a{tok.text.substr(0, colon), tok.column};
        const Token b{tok.text.substr(colon + 1), tok.column + colon + 1};
        slices.push_back({parse_index(a, reader), parse_index(b, reader)});
    }
    return slices;
}

std::string format_slices(std::span<const LevelSlice> slices) {
    std::string out;
    for (const auto& s : slices) {
        if (!out.empty()) out += ',';
        out += std::to_string(s.start) + ":" + std::to_string(s.end);
    }
    return out.empty() ? "<none>" : out;
}

} // namespace ocs
