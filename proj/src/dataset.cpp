#include "mixmed/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "mixmed/error.hpp"

namespace mixmed {

namespace {

bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char ch;
    while (in.get(ch)) {
        any = true;
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan" ||
           cell == "null";
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace

std::vector<std::string> split_csv_record(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> fields;
    read_csv_record(in, fields);
    return fields;
}

Role Dataset::role_of(const std::string& column) const {
    if (column == mediator_name) return Role::mediator;
    if (column == outcome_name) return Role::outcome;
    if (std::find(exposure_names.begin(), exposure_names.end(), column) != exposure_names.end())
        return Role::exposure;
    if (std::find(confounder_names.begin(), confounder_names.end(), column) !=
        confounder_names.end())
        return Role::confounder;
    throw SchemaError("unknown column '" + column + "'");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    const auto m = static_cast<Index>(rows.size());
    out.exposures.resize(m, p());
    out.mediator.resize(m);
    out.outcome.resize(m);
    out.confounders.resize(m, s());
    out.row_ids.reserve(rows.size());
    for (Index i = 0; i < m; ++i) {
        const auto r = static_cast<Index>(rows[static_cast<std::size_t>(i)]);
        if (r < 0 || r >= n()) throw DomainError("subset: row index out of range");
        out.exposures.row(i) = exposures.row(r);
        out.mediator(i) = mediator(r);
        out.outcome(i) = outcome(r);
        out.confounders.row(i) = confounders.row(r);
        out.row_ids.push_back(row_ids.empty() ? static_cast<std::size_t>(r)
                                              : row_ids[static_cast<std::size_t>(r)]);
    }
    out.exposure_names = exposure_names;
    out.mediator_name = mediator_name;
    out.outcome_name = outcome_name;
    out.confounder_names = confounder_names;
    return out;
}

void Dataset::validate() const {
    const Index rows = n();
    if (mediator.size() != rows || exposures.rows() != rows || confounders.rows() != rows)
        throw SchemaError("dataset columns have unequal lengths");
    if (static_cast<Index>(exposure_names.size()) != p() ||
        static_cast<Index>(confounder_names.size()) != s())
        throw SchemaError("dataset column names do not match column counts");
    if (rows < 2) throw InsufficientDataError("dataset needs at least 2 rows");
    std::set<std::string> seen;
    auto claim = [&](const std::string& name) {
        if (!seen.insert(name).second)
            throw SchemaError("column '" + name + "' assigned more than one role");
    };
    for (const auto& c : exposure_names) claim(c);
    claim(mediator_name);
    claim(outcome_name);
    for (const auto& c : confounder_names) claim(c);
    if (!exposures.allFinite() || !mediator.allFinite() || !outcome.allFinite() ||
        !confounders.allFinite())
        throw ParseError("dataset contains non-finite values");
}

Dataset make_dataset(MatrixXd exposures, VectorXd mediator, VectorXd outcome,
                     MatrixXd confounders) {
    Dataset d;
    if (confounders.size() == 0) confounders.resize(outcome.size(), 0);
    d.exposures = std::move(exposures);
    d.mediator = std::move(mediator);
    d.outcome = std::move(outcome);
    d.confounders = std::move(confounders);
    for (Index j = 0; j < d.p(); ++j) d.exposure_names.push_back("X" + std::to_string(j + 1));
    for (Index j = 0; j < d.s(); ++j) d.confounder_names.push_back("C" + std::to_string(j + 1));
    d.row_ids.resize(static_cast<std::size_t>(d.n()));
    for (std::size_t i = 0; i < d.row_ids.size(); ++i) d.row_ids[i] = i;
    d.validate();
    return d;
}

LoadedDataset read_dataset(std::istream& in, const Schema& schema) {
    std::vector<std::string> header;
    if (!read_csv_record(in, header)) throw ParseError("CSV is empty (header row required)");
    for (auto& h : header) h = trim(h);
    if (!header.empty() && header[0].size() >= 3 &&
        header[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
        header[0] = header[0].substr(3);

    std::unordered_map<std::string, std::size_t> col_of;
    for (std::size_t i = 0; i < header.size(); ++i) col_of.emplace(header[i], i);

    if (schema.mediator.empty() || schema.outcome.empty())
        throw SchemaError("schema must name exactly one mediator and one outcome");
    if (schema.exposures.empty()) throw SchemaError("schema must name at least one exposure");

    std::set<std::string> assigned;
    auto lookup = [&](const std::string& name) {
        if (!assigned.insert(name).second)
            throw SchemaError("column '" + name + "' assigned more than one role");
        auto it = col_of.find(name);
        if (it == col_of.end()) throw SchemaError("missing column '" + name + "'");
        return it->second;
    };
    std::vector<std::size_t> xcols;
    for (const auto& e : schema.exposures) xcols.push_back(lookup(e));
    const std::size_t mcol = lookup(schema.mediator);
    const std::size_t ycol = lookup(schema.outcome);
    std::vector<std::size_t> ccols;
    std::vector<bool> ccat;
    for (const auto& c : schema.confounders) {
        ccols.push_back(lookup(c));
        ccat.push_back(std::find(schema.categorical.begin(), schema.categorical.end(), c) !=
                       schema.categorical.end());
    }
    for (const auto& c : schema.categorical) {
        if (std::find(schema.confounders.begin(), schema.confounders.end(), c) ==
            schema.confounders.end())
            throw SchemaError("categorical column '" + c + "' is not a confounder");
    }

    // Pass 1: collect complete rows as raw strings.
    std::vector<std::size_t> used = xcols;
    used.push_back(mcol);
    used.push_back(ycol);
    used.insert(used.end(), ccols.begin(), ccols.end());

    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> row_ids;
    std::vector<std::size_t> line_numbers;
    LoadReport report;
    std::vector<std::string> fields;
    std::size_t line = 1;
    while (read_csv_record(in, fields)) {
        ++line;
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
        const std::size_t data_row = report.rows_read++;
        if (fields.size() != header.size()) {
            throw ParseError("row " + std::to_string(line) + ": expected " +
                             std::to_string(header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        }
        bool missing = false;
        for (auto c : used) {
            fields[c] = trim(fields[c]);
            if (is_missing(fields[c])) missing = true;
        }
        if (missing) {
            ++report.rows_dropped;
            continue;
        }
        rows.push_back(fields);
        row_ids.push_back(data_row);
        line_numbers.push_back(line);
    }

    const auto n = static_cast<Index>(rows.size());
    if (n < 2)
        throw InsufficientDataError("fewer than 2 complete rows after dropping missing values");

    auto numeric = [&](std::size_t r, std::size_t c) {
        const std::string& cell = rows[r][c];
        double v = 0.0;
        const char* first = cell.data();
        const char* last = cell.data() + cell.size();
        if (!cell.empty() && *first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
            throw ParseError("row " + std::to_string(line_numbers[r]) + ", column '" +
                             header[c] + "': non-numeric value '" + cell + "'");
        }
        return v;
    };

    Dataset d;
    d.exposure_names = schema.exposures;
    d.mediator_name = schema.mediator;
    d.outcome_name = schema.outcome;
    d.exposures.resize(n, static_cast<Index>(xcols.size()));
    d.mediator.resize(n);
    d.outcome.resize(n);
    for (Index i = 0; i < n; ++i) {
        const auto r = static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < xcols.size(); ++j)
            d.exposures(i, static_cast<Index>(j)) = numeric(r, xcols[j]);
        d.mediator(i) = numeric(r, mcol);
        d.outcome(i) = numeric(r, ycol);
    }

    std::vector<VectorXd> cblocks;
    for (std::size_t k = 0; k < ccols.size(); ++k) {
        const std::string& cname = schema.confounders[k];
        if (!ccat[k]) {
            VectorXd col(n);
            for (Index i = 0; i < n; ++i) col(i) = numeric(static_cast<std::size_t>(i), ccols[k]);
            cblocks.push_back(std::move(col));
            d.confounder_names.push_back(cname);
            continue;
        }
        std::set<std::string> levels;
        for (const auto& row : rows) levels.insert(row[ccols[k]]);
        auto it = levels.begin();
        if (it != levels.end()) ++it;  // first level is the reference
        for (; it != levels.end(); ++it) {
            VectorXd col(n);
            for (Index i = 0; i < n; ++i)
                col(i) = rows[static_cast<std::size_t>(i)][ccols[k]] == *it ? 1.0 : 0.0;
            cblocks.push_back(std::move(col));
            d.confounder_names.push_back(cname + "_" + *it);
        }
    }
    d.confounders.resize(n, static_cast<Index>(cblocks.size()));
    for (std::size_t k = 0; k < cblocks.size(); ++k) d.confounders.col(static_cast<Index>(k)) = cblocks[k];
    d.row_ids = std::move(row_ids);
    d.validate();
    return {std::move(d), report};
}

LoadedDataset load_dataset(const std::filesystem::path& path, const Schema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open dataset '" + path.string() + "'");
    return read_dataset(in, schema);
}

Schema schema_of(const Dataset& data) {
    Schema s;
    s.exposures = data.exposure_names;
    s.mediator = data.mediator_name;
    s.outcome = data.outcome_name;
    s.confounders = data.confounder_names;
    return s;
}

void write_dataset_csv(const Dataset& data, std::ostream& out) {
    std::vector<std::string> names = data.exposure_names;
    names.push_back(data.mediator_name);
    names.push_back(data.outcome_name);
    names.insert(names.end(), data.confounder_names.begin(), data.confounder_names.end());
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << csv_quote(names[i]);
    out << '\n';
    for (Index i = 0; i < data.n(); ++i) {
        bool first = true;
        auto put = [&](double v) {
            if (!first) out << ',';
            out << format_double(v);
            first = false;
        };
        for (Index j = 0; j < data.p(); ++j) put(data.exposures(i, j));
        put(data.mediator(i));
        put(data.outcome(i));
        for (Index j = 0; j < data.s(); ++j) put(data.confounders(i, j));
        out << '\n';
    }
}

Standardized standardize(const MatrixXd& matrix, std::span<const std::string> names) {
    const Index n = matrix.rows();
    if (n < 2) throw InsufficientDataError("standardize needs at least 2 rows");
    Standardized out;
    out.means = matrix.colwise().mean().transpose();
    out.values = matrix.rowwise() - out.means.transpose();
    out.sds.resize(matrix.cols());
    for (Index j = 0; j < matrix.cols(); ++j) {
        const double sd = std::sqrt(out.values.col(j).squaredNorm() / static_cast<double>(n - 1));
        const double scale = std::max(1.0, out.means.cwiseAbs()(j));
        if (!(sd > 1e-12 * scale)) {
            const std::string label = static_cast<std::size_t>(j) < names.size()
                                          ? names[static_cast<std::size_t>(j)]
                                          : "column " + std::to_string(j);
            throw DegenerateColumnError("zero-variance column: " + label);
        }
        out.sds(j) = sd;
        out.values.col(j) /= sd;
    }
    return out;
}

MatrixXd apply_standardization(const MatrixXd& matrix, const VectorXd& means, const VectorXd& sds) {
    if (matrix.cols() != means.size() || matrix.cols() != sds.size())
        throw DomainError("apply_standardization: dimension mismatch");
    MatrixXd out = matrix.rowwise() - means.transpose();
    return out.array().rowwise() / sds.transpose().array();
}

Split split_train_analysis(const Dataset& data, SeededRng& rng) {
    const auto n = static_cast<std::size_t>(data.n());
    if (n < 4) throw InsufficientDataError("train/analysis split needs at least 4 rows");
    auto perm = rng.permutation(n);
    const std::size_t n_train = n / 2;
    Split split;
    split.train_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.analysis_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(split.train_rows.begin(), split.train_rows.end());
    std::sort(split.analysis_rows.begin(), split.analysis_rows.end());
    split.train = data.subset(split.train_rows);
    split.analysis = data.subset(split.analysis_rows);
    return split;
}

double quantile(std::span<const double> values, double prob) {
    if (values.empty()) throw DomainError("quantile of empty sample");
    if (!(prob >= 0.0 && prob <= 1.0)) throw DomainError("quantile probability outside [0,1]");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double h = static_cast<double>(v.size() - 1) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double quantile(const VectorXd& values, double prob) {
    return quantile(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())),
                    prob);
}

} // namespace mixmed
