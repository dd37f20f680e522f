import numpy as np

from ideotype.cluster import ClusterModel


def model_from(assignment, representatives) -> ClusterModel:
    """Cluster model with uniform prototypes for a given partition."""
    assignment = np.asarray(assignment)
    K = int(assignment.max()) + 1
    beta = np.zeros((K, assignment.size))
    for k in range(K):
        beta[k, assignment == k] = 1.0 / (assignment == k).sum()
    return ClusterModel(
        beta=beta,
        assignment=assignment,
        class_sizes=np.bincount(assignment, minlength=K),
        representatives=np.asarray(representatives),
        energy=0.0,
    )
