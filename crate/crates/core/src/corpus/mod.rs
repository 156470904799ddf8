//! Tile-grid geometry, tile rasters and the synthetic tile generator.

mod geo;
mod synth;
mod tile;

pub use geo::{
    haversine_km, location_to_tile_index, tile_coverage_grid, BoundingBox, GridSpacing, Location,
    EARTH_RADIUS_KM, MAX_MERCATOR_LAT, MAX_ZOOM,
};
pub use synth::{
    generate_synthetic_tile, sample_profile, shape_kind, Background, ClassProfile, PlacedObject,
    ProfileMix, ShapeKind, SyntheticScene, CELL_PX, CLASS_COLORS, CLASS_TAGS, MARK_ROWS, MIN_SIZE,
};
pub use tile::{
    filter_flat_tiles, pixel_variance, rotate_tile, FlatKinds, TileCorpus, TileImage, TileRecord,
    TileSource, CHANNELS,
};
