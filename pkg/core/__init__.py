"""Engine core: tensors, autodiff, optimizer, persistence and run orchestration."""
