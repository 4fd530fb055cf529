#include "cfa/dataset.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cfa {

void LabeledDataset::validate() const {
    const std::size_t n = inputs.rows;
    if (class_labels.size() != n || domain_labels.size() != n || domain_label_present.size() != n)
        throw std::invalid_argument("LabeledDataset: label arrays must match input row count");
    for (int y : class_labels)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw std::invalid_argument("LabeledDataset: class label out of range");
    for (int e : domain_labels)
        if (e < 0 || static_cast<std::size_t>(e) >= num_domains)
            throw std::invalid_argument("LabeledDataset: domain label out of range");
}

namespace {

void write_raw(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_raw(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("dataset file truncated");
}

}  // namespace

void save_dataset(const LabeledDataset& ds, const std::string& path) {
    ds.validate();
    nlohmann::json header = {
        {"N", ds.size()},
        {"p", ds.inputs.cols},
        {"K", ds.num_classes},
        {"E", ds.num_domains},
        {"dtypes", {{"inputs", "f64"}, {"class_labels", "i32"}, {"domain_labels", "i32"}, {"domain_label_present", "u8"}}},
    };
    const std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write("CFD1", 4);
    const std::uint64_t len = hs.size();
    write_raw(os, &len, sizeof(len));
    write_raw(os, hs.data(), hs.size());
    write_raw(os, ds.inputs.data.data(), ds.inputs.data.size() * sizeof(double));
    std::vector<std::int32_t> tmp(ds.class_labels.begin(), ds.class_labels.end());
    write_raw(os, tmp.data(), tmp.size() * sizeof(std::int32_t));
    tmp.assign(ds.domain_labels.begin(), ds.domain_labels.end());
    write_raw(os, tmp.data(), tmp.size() * sizeof(std::int32_t));
    write_raw(os, ds.domain_label_present.data(), ds.domain_label_present.size());
    if (!os) throw std::runtime_error("write failed: " + path);
}

LabeledDataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    read_raw(is, magic, 4);
    if (std::string(magic, 4) != "CFD1") throw std::runtime_error("bad magic in " + path);
    std::uint64_t len = 0;
    read_raw(is, &len, sizeof(len));
    std::string hs(len, '\0');
    read_raw(is, hs.data(), len);
    const nlohmann::json header = nlohmann::json::parse(hs);
    LabeledDataset ds;
    const std::size_t n = header.at("N").get<std::size_t>();
    const std::size_t p = header.at("p").get<std::size_t>();
    ds.num_classes = header.at("K").get<std::size_t>();
    ds.num_domains = header.at("E").get<std::size_t>();
    ds.inputs = Matrix(n, p);
    read_raw(is, ds.inputs.data.data(), n * p * sizeof(double));
    std::vector<std::int32_t> tmp(n);
    read_raw(is, tmp.data(), n * sizeof(std::int32_t));
    ds.class_labels.assign(tmp.begin(), tmp.end());
    read_raw(is, tmp.data(), n * sizeof(std::int32_t));
    ds.domain_labels.assign(tmp.begin(), tmp.end());
    ds.domain_label_present.resize(n);
    read_raw(is, ds.domain_label_present.data(), n);
    ds.validate();
    return ds;
}

}  // namespace cfa
