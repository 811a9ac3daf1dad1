from .contour import (
    ContourGrid,
    Polyline,
    extract_contour_2d,
    filter_local_minima,
    write_contours_csv,
)
from .raycast import (
    Camera,
    Image,
    RayCastConfig,
    RayHits,
    cast_ray,
    cast_rays,
    render,
    write_ppm,
)
