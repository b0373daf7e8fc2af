#pragma once

// Model checkpoints on top of the tensor container: the header metadata
// carries the architecture descriptor {c1, c2, order, input_h, input_w} and
// loading validates tensor shapes against it.

#include "rppg/container.hpp"
#include "rppg/model.hpp"

#include <filesystem>

namespace rppg {

template <class S>
Container to_container(TdmModel<S>& model) {
  Container c;
  const TdmArch& a = model.arch();
  c.meta["format"] = 1;
  c.meta["c1"] = static_cast<double>(a.c1);
  c.meta["c2"] = static_cast<double>(a.c2);
  c.meta["order"] = static_cast<double>(a.order);
  c.meta["input_h"] = static_cast<double>(a.input_h);
  c.meta["input_w"] = static_cast<double>(a.input_w);
  for (Tensor<S>& p : model.parameters())
    c.tensors.push_back(ContainerEntry::make<S>(p.name(), p.shape(), p.array()));
  c.tensors.push_back(ContainerEntry::make<S>("bn1.running_mean", {model.bn1.running_mean.size()},
                                              model.bn1.running_mean));
  c.tensors.push_back(ContainerEntry::make<S>("bn1.running_var", {model.bn1.running_var.size()},
                                              model.bn1.running_var));
  c.tensors.push_back(ContainerEntry::make<S>("bn2.running_mean", {model.bn2.running_mean.size()},
                                              model.bn2.running_mean));
  c.tensors.push_back(ContainerEntry::make<S>("bn2.running_var", {model.bn2.running_var.size()},
                                              model.bn2.running_var));
  c.tensors.push_back(
      ContainerEntry::make<S>("dtc.kernel", model.dtc_kernel().shape(), model.dtc_kernel().array()));
  return c;
}

template <class S>
void save_checkpoint(const std::filesystem::path& path, TdmModel<S>& model) {
  to_container(model).save(path);
}

inline TdmArch arch_from_container(const Container& c) {
  TdmArch a;
  a.c1 = static_cast<Index>(c.meta_at("c1"));
  a.c2 = static_cast<Index>(c.meta_at("c2"));
  a.order = static_cast<int>(c.meta_at("order"));
  a.input_h = static_cast<Index>(c.meta_at("input_h"));
  a.input_w = static_cast<Index>(c.meta_at("input_w"));
  return a;
}

template <class S>
void load_tensor_into(const Container& c, const std::string& name, Tensor<S>& dst) {
  const ContainerEntry& e = c.at(name);
  if (e.shape != dst.shape())
    throw IoError("checkpoint: tensor '" + name + "' has shape " + shape_str(e.shape) +
                  ", model expects " + shape_str(dst.shape()));
  dst.array() = e.values<S>();
}

// Rebuilds a model from a checkpoint. When `expected` is given, the embedded
// architecture descriptor must match it exactly.
template <class S>
TdmModel<S> load_checkpoint(const std::filesystem::path& path,
                            const std::optional<TdmArch>& expected = std::nullopt) {
  const Container c = Container::load(path);
  const TdmArch arch = arch_from_container(c);
  if (expected && !(arch == *expected))
    throw IoError("checkpoint: architecture descriptor mismatch in " + path.string());

  TdmModel<S> model(arch, /*seed=*/0);
  for (Tensor<S>& p : model.parameters()) load_tensor_into(c, p.name(), p);
  model.bn1.running_mean = c.at("bn1.running_mean").values<S>();
  model.bn1.running_var = c.at("bn1.running_var").values<S>();
  model.bn2.running_mean = c.at("bn2.running_mean").values<S>();
  model.bn2.running_var = c.at("bn2.running_var").values<S>();
  load_tensor_into(c, "dtc.kernel", model.dtc_kernel_);
  return model;
}

}  // namespace rppg
