//! A deterministic synthetic traffic-stop table used as the default carrier.
//!
//! Column 0 (`id`) is a synthetic primary key; the remaining columns are
//! drawn from small vocabularies and numeric ranges so that independent
//! per-column resampling has a very large value space.

use rand::Rng as _;

use crate::rng::rng_from;
use crate::store::{Schema, Table, Tuple};

pub const KEY_COLUMN: &str = "id";

const COLUMNS: &[&str] = &[
    KEY_COLUMN,
    "date_of_stop",
    "time_of_stop",
    "sub_agency",
    "description",
    "location",
    "latitude",
    "longitude",
    "vehicle_type",
    "year",
    "make",
    "color",
    "violation_type",
    "gender",
];

const SUB_AGENCIES: &[&str] = &[
    "1st District, Rockville",
    "2nd District, Bethesda",
    "3rd District, Silver Spring",
    "4th District, Wheaton",
    "5th District, Germantown",
    "6th District, Gaithersburg / Montgomery Village",
    "Headquarters and Special Operations",
];

const DESCRIPTIONS: &[&str] = &[
    "DRIVING VEHICLE ON HIGHWAY WITH SUSPENDED REGISTRATION",
    "FAILURE TO DISPLAY REGISTRATION CARD UPON DEMAND BY POLICE OFFICER",
    "DRIVER FAILURE TO OBEY PROPERLY PLACED TRAFFIC CONTROL DEVICE INSTRUCTIONS",
    "EXCEEDING THE POSTED SPEED LIMIT OF 40 MPH",
    "FAILURE TO STOP AT STOP SIGN",
    "DRIVING WHILE USING HANDHELD TELEPHONE",
    "HEADLIGHTS INOPERATIVE",
    "PERSON DRIVING MOTOR VEHICLE ON HIGHWAY WITHOUT REQUIRED LICENSE",
    "FAILURE OF INDIVIDUAL DRIVING ON HIGHWAY TO DISPLAY LICENSE",
    "DRIVER CHANGING LANES WHEN UNSAFE",
    "NEGLIGENT DRIVING VEHICLE IN CARELESS AND IMPRUDENT MANNER",
    "FAILURE TO YIELD RIGHT OF WAY",
];

const STREETS: &[&str] = &[
    "GEORGIA AVE",
    "ROCKVILLE PIKE",
    "CONNECTICUT AVE",
    "UNIVERSITY BLVD",
    "COLESVILLE RD",
    "RANDOLPH RD",
    "NEW HAMPSHIRE AVE",
    "RIVER RD",
    "OLD GEORGETOWN RD",
    "SHADY GROVE RD",
    "MIDDLEBROOK RD",
    "FREDERICK RD",
];

const VEHICLE_TYPES: &[&str] = &[
    "02 - Automobile",
    "28 - Other",
    "05 - Light Duty Truck",
    "06 - Heavy Duty Truck",
    "01 - Motorcycle",
];

const MAKES: &[&str] = &[
    "TOYOTA", "HONDA", "FORD", "NISSAN", "CHEVROLET", "DODGE", "HYUNDAI", "ACURA", "BMW", "LEXUS",
    "JEEP", "SUBARU", "MAZDA", "KIA", "VOLKSWAGEN",
];

const COLORS: &[&str] = &[
    "BLACK", "SILVER", "WHITE", "GRAY", "RED", "BLUE", "GREEN", "GOLD", "MAROON", "TAN",
];

const VIOLATION_TYPES: &[&str] = &["Citation", "Warning", "ESERO", "SERO"];

const GENDERS: &[&str] = &["M", "F", "U"];

fn pick<'a>(rng: &mut impl rand::Rng, items: &[&'a str]) -> &'a str {
    items[rng.random_range(0..items.len())]
}

pub fn synthetic_schema() -> Schema {
    Schema::new(COLUMNS.iter().copied()).expect("static schema is valid")
}

/// `n` rows; identical for identical `(n, seed)`.
pub fn synthetic_table(n: usize, seed: u64) -> Table {
    let mut rng = rng_from(seed);
    let rows = (0..n)
        .map(|i| {
            Tuple::new([
                format!("{}", 100_000 + i),
                format!(
                    "{:02}/{:02}/{}",
                    rng.random_range(1..=12),
                    rng.random_range(1..=28),
                    rng.random_range(2012..=2023)
                ),
                format!(
                    "{:02}:{:02}:00",
                    rng.random_range(0..24),
                    rng.random_range(0..60)
                ),
                pick(&mut rng, SUB_AGENCIES).to_owned(),
                pick(&mut rng, DESCRIPTIONS).to_owned(),
                format!(
                    "{} @ {}",
                    pick(&mut rng, STREETS),
                    pick(&mut rng, STREETS)
                ),
                format!("{:.7}", rng.random_range(38.95..39.35)),
                format!("{:.7}", rng.random_range(-77.45..-76.95)),
                pick(&mut rng, VEHICLE_TYPES).to_owned(),
                format!("{}", rng.random_range(1995..=2023)),
                pick(&mut rng, MAKES).to_owned(),
                pick(&mut rng, COLORS).to_owned(),
                pick(&mut rng, VIOLATION_TYPES).to_owned(),
                pick(&mut rng, GENDERS).to_owned(),
            ])
        })
        .collect();
    Table::new(synthetic_schema(), rows).expect("rows match schema")
}
