#include "pcgrbm/model_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace pcgrbm {

namespace {

constexpr const char* kMagic = "pcgrbm-model";
constexpr int kVersion = 1;

template <typename T>
T read_value(std::istream& in, const std::string& expected_key) {
    std::string key;
    T value{};
    if (!(in >> key) || key != expected_key) throw IoError("model file: expected '" + expected_key + "', got '" + key + "'");
    if (!(in >> value)) throw IoError("model file: bad value for '" + expected_key + "'");
    return value;
}

void expect_token(std::istream& in, const std::string& token) {
    std::string got;
    if (!(in >> got) || got != token) throw IoError("model file: expected '" + token + "', got '" + got + "'");
}

double read_number(std::istream& in) {
    std::string tok;
    if (!(in >> tok)) throw IoError("model file: truncated parameter block");
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw IoError("model file: bad number '" + tok + "'");
        return v;
    } catch (const std::logic_error&) {
        throw IoError("model file: bad number '" + tok + "'");
    }
}

double read_double(std::istream& in, const std::string& key) {
    expect_token(in, key);
    return read_number(in);
}

void write_vector(std::ostream& out, const char* name, const Vector& v) {
    out << name << "\n";
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << v(i);
    out << "\n";
}

Vector read_vector(std::istream& in, const char* name, Eigen::Index size) {
    expect_token(in, name);
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = read_number(in);
    return v;
}

}  // namespace

void write_model(std::ostream& out, const ModelFile& model) {
    const auto& params = model.params;
    out << std::setprecision(17);
    out << kMagic << " " << kVersion << "\n";
    out << "kind " << (model.constraints ? "pcgrbm" : "grbm") << "\n";
    out << "p " << params.visible() << "\n";
    out << "q " << params.hidden() << "\n";
    out << "epsilon " << model.train.epsilon << "\n";
    out << "epochs " << model.train.epochs << "\n";
    out << "batch_size " << model.train.batch_size << "\n";
    out << "seed " << model.train.seed << "\n";
    if (const auto& c = model.constraints) {
        out << "lambda " << c->lambda << "\n";
        out << "sign_mode " << to_string(c->sign_mode) << "\n";
        out << "constraint_rate " << c->constraint_rate << "\n";
        out << "use_sampled_hidden " << (c->use_sampled_hidden ? 1 : 0) << "\n";
        out << "must_count " << c->must_count << "\n";
        out << "cannot_count " << c->cannot_count << "\n";
        out << "constraint_hash " << std::hex << std::setw(16) << std::setfill('0') << c->fingerprint << std::dec
            << std::setfill(' ') << "\n";
    }
    out << "W\n";
    for (Eigen::Index i = 0; i < params.weights.rows(); ++i) {
        for (Eigen::Index j = 0; j < params.weights.cols(); ++j) out << (j ? " " : "") << params.weights(i, j);
        out << "\n";
    }
    write_vector(out, "a", params.visible_bias);
    write_vector(out, "b", params.hidden_bias);
    write_vector(out, "sigma", params.sigma);
    out << "end\n";
}

ModelFile read_model(std::istream& in) {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kMagic) throw IoError("not a pcgrbm model file");
    if (version != kVersion) throw IoError("unsupported model file version " + std::to_string(version));

    ModelFile model;
    const auto kind = read_value<std::string>(in, "kind");
    if (kind != "grbm" && kind != "pcgrbm") throw IoError("model file: unknown kind '" + kind + "'");
    const auto p = read_value<Index>(in, "p");
    const auto q = read_value<Index>(in, "q");
    if (p < 1 || q < 1) throw IoError("model file: p and q must be >= 1");
    model.train.epsilon = read_double(in, "epsilon");
    model.train.epochs = read_value<Index>(in, "epochs");
    model.train.batch_size = read_value<Index>(in, "batch_size");
    model.train.seed = read_value<std::uint64_t>(in, "seed");
    if (kind == "pcgrbm") {
        ConstraintProvenance c;
        c.lambda = read_double(in, "lambda");
        c.sign_mode = parse_sign_mode(read_value<std::string>(in, "sign_mode"));
        c.constraint_rate = read_double(in, "constraint_rate");
        c.use_sampled_hidden = read_value<int>(in, "use_sampled_hidden") != 0;
        c.must_count = read_value<Index>(in, "must_count");
        c.cannot_count = read_value<Index>(in, "cannot_count");
        const auto hash = read_value<std::string>(in, "constraint_hash");
        try {
            c.fingerprint = std::stoull(hash, nullptr, 16);
        } catch (const std::logic_error&) {
            throw IoError("model file: bad constraint_hash '" + hash + "'");
        }
        model.constraints = c;
    }

    const auto P = static_cast<Eigen::Index>(p);
    const auto Q = static_cast<Eigen::Index>(q);
    expect_token(in, "W");
    model.params.weights.resize(P, Q);
    for (Eigen::Index i = 0; i < P; ++i)
        for (Eigen::Index j = 0; j < Q; ++j) model.params.weights(i, j) = read_number(in);
    model.params.visible_bias = read_vector(in, "a", P);
    model.params.hidden_bias = read_vector(in, "b", Q);
    model.params.sigma = read_vector(in, "sigma", P);
    expect_token(in, "end");
    try {
        model.params.validate();
    } catch (const InvalidArgument& e) {
        throw IoError(std::string("model file: ") + e.what());
    }
    return model;
}

void save_model(const ModelFile& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_model(out, model);
    if (!out) throw IoError("write failed for " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_model(in);
}

}  // namespace pcgrbm
