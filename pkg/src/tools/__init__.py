"""Pipeline modules: scene, voxel grid, surface, tracer, refine, oracle and orchestration."""
