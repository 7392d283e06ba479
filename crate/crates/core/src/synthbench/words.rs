// Entity vocabulary is capitalized or numeric; filler vocabulary is
// lowercase letters only, so a case-sensitive scan separates them.

pub const FIRST_NAMES: &[&str] = &[
    "Aldric", "Bryna", "Corvin", "Delphine", "Eamon", "Fenna", "Gideon", "Hesper", "Ivor", "Jolene", "Kester",
    "Linnea", "Magnus", "Nerissa", "Osric", "Perpetua", "Quillon", "Rosalind", "Sorrel", "Tamsin", "Ulric", "Verity",
    "Wystan", "Xanthe", "Yorick", "Zinnia", "Anselm", "Berenice", "Caspian", "Dorothea", "Evander", "Florian",
    "Griselda", "Hamish", "Isolde", "Jasper", "Kerensa", "Leopold", "Morwenna", "Niall", "Oriel", "Piran", "Rowena", "Saffron",
    "Tobiah", "Ursa", "Vashti", "Wilfred", "Ysolde", "Zebedee", "Alaric", "Bettany", "Cressida", "Dorian", "Elspeth",
    "Fitzroy", "Gwendolen", "Horatio", "Imogen", "Jethro", "Kirsten", "Lysander", "Mirabel", "Nathaniel", "Ottoline",
    "Peregrine", "Rufus", "Seraphina", "Thaddeus", "Winifred", "Barnaby", "Clementine", "Desmond", "Esme", "Fabian",
    "Honora", "Ignatius", "Juniper", "Lucian", "Marigold", "Ambrose", "Briony", "Cyprian", "Damaris", "Ebenezer",
    "Fenella", "Godfrey", "Hyacinth", "Isidore", "Jemima", "Lorcan", "Melisande", "Norbert", "Olwen", "Percival",
    "Rosamund", "Silas", "Theodora", "Valentin", "Wilhelmina", "Aurelio", "Bronwen", "Cornelius", "Drusilla",
    "Erasmus", "Felicity", "Gervase", "Hortense", "Ingram", "Jocasta", "Leander", "Minerva", "Octavian", "Philippa",
    "Reginald", "Sybilla", "Tristram", "Ulrika", "Vivienne", "Wendeline",
];

pub const LAST_NAMES: &[&str] = &[
    "Ashcombe", "Blackwood", "Carrow", "Dunmore", "Everleigh", "Fairweather", "Greythorn", "Hollis", "Ingleby",
    "Jessop", "Kettering", "Lockhart", "Marchbank", "Northcott", "Oakhurst", "Penrose", "Quarrie", "Ravensworth",
    "Stanhope", "Thackeray", "Underhill", "Vesey", "Whitlock", "Yarwood", "Abernethy", "Blythe", "Cradock",
    "Dewhurst", "Elphick", "Fennimore", "Gossage", "Hartigan", "Iredale", "Jardine", "Kinsella", "Lindqvist",
    "Mowbray", "Nethercott", "Ormerod", "Prideaux", "Quennell", "Rainsford", "Sackville", "Tregarthen", "Urquhart",
    "Vickery", "Wetherby", "Aldridge", "Bramley", "Chettle", "Dimmock", "Eastlake", "Foxcroft", "Garside", "Hebblethwaite",
    "Illingworth", "Jolliffe", "Kemble", "Loxley", "Merriman", "Nutley", "Ottaway", "Pettigrew", "Ruddock",
    "Shillito", "Tunstall", "Vosper", "Wragg", "Bellamy", "Cobbold", "Dinsdale", "Enright", "Fothergill", "Goodbody",
    "Hesketh", "Inchbald", "Ravenhill", "Sowerby", "Trelawney", "Westmacott", "Ainsworth", "Bagshaw", "Cholmondeley",
    "Duckworth", "Etheridge", "Fanshawe", "Gilchrist", "Haverford", "Ibbotson", "Jellicoe", "Kirkbride", "Langridge",
    "Mabberley", "Nettleship", "Oddie", "Pinchbeck", "Rushworth", "Scarisbrick", "Thistlewood", "Uttley", "Verral",
    "Warburton", "Ackroyd", "Bickerstaff", "Culpepper", "Dalrymple", "Entwistle", "Farquhar", "Grimshaw", "Hobday",
    "Isherwood", "Kendrick", "Lumley", "Montague", "Nuttall", "Ogilvie", "Pemberton", "Rowbotham", "Stirrup",
    "Tattersall",
];

pub const BIRTHPLACES: &[&str] = &[
    "Florence", "Kyoto", "Valparaiso", "Tromso", "Marrakesh", "Cusco", "Tbilisi", "Halifax", "Bruges", "Zanzibar",
    "Galway", "Salzburg", "Porto", "Krakow", "Hobart", "Mombasa", "Cartagena", "Trieste", "Bergen", "Antigua",
    "Granada", "Odessa", "Quebec", "Adelaide", "Seville", "Lucerne", "Tangier", "Dubrovnik", "Savannah", "Kandy",
    "Inverness", "Ushuaia", "Aberdeen", "Bologna", "Cordoba", "Dresden", "Essaouira", "Fremantle", "Ghent",
    "Heidelberg", "Innsbruck", "Jaipur", "Kilkenny", "Leipzig", "Montreux", "Nantes", "Oaxaca", "Perugia",
    "Queenstown", "Rotterdam", "Siena", "Toledo", "Utrecht", "Verona", "Winnipeg", "Yokohama", "Zurich", "Arequipa",
    "Bilbao", "Cambridge", "Darwin", "Edinburgh", "Fez", "Genoa", "Hamburg", "Isfahan", "Kingston", "Lyon", "Malaga",
    "Naples", "Oxford", "Palermo", "Riga", "Sapporo", "Tallinn", "Uppsala", "Vilnius", "Wellington", "Asmara",
    "Bordeaux", "Cadiz", "Durban", "Eindhoven", "Funchal", "Gdansk", "Hanoi", "Izmir", "Jerez", "Kaunas", "Lausanne",
    "Mendoza", "Nagasaki", "Odense", "Plovdiv", "Rosario", "Sintra", "Tartu", "Udaipur", "Valencia", "Windhoek",
    "Agra", "Brisbane", "Coimbra", "Dunedin", "Erfurt", "Galle", "Hue", "Iquitos", "Jodhpur", "Kotor", "Lublin",
    "Matera", "Nafplio", "Orvieto", "Puebla", "Ronda", "Split", "Turku", "Urbino", "Visby", "Whitby", "Arles",
    "Bamberg", "Colmar", "Delft", "Evora", "Girona", "Hallstatt",
];

/// Combined with [`GENRE_MOODS`] as "{mood} {genre}".
pub const GENRES: &[&str] = &[
    "Satire", "Gothic Romance", "Space Opera", "Noir", "Magical Realism", "Epic Poetry", "Cozy Mystery", "Dystopian",
    "Travel Memoir", "Historical Saga", "Folk Horror", "Picaresque", "Legal Thriller", "Pastoral", "Cyberpunk",
    "Fable",
];

pub const GENRE_MOODS: &[&str] = &["Comic", "Dark", "Lyrical", "Urban", "Rural", "Tragic", "Whimsical", "Epistolary"];

/// Combined with [`AWARD_OBJECTS`] as "{metal} {object}".
pub const AWARD_METALS: &[&str] = &[
    "Gold", "Silver", "Amber", "Crimson", "Iron", "Jade", "Copper", "Ivory", "Cobalt", "Emerald", "Obsidian", "Scarlet",
];

pub const AWARD_OBJECTS: &[&str] = &[
    "Quill", "Lantern", "Laurel", "Feather", "Inkwell", "Compass", "Owl", "Scroll", "Star", "Key", "Pen", "Ribbon",
];

pub const TITLE_ADJ: &[&str] = &[
    "Silent", "Hollow", "Burning", "Forgotten", "Restless", "Gilded", "Drowned", "Wandering", "Broken", "Hidden",
    "Crooked", "Endless",
];

pub const TITLE_NOUN: &[&str] = &[
    "Harbor", "Orchard", "Cathedral", "Meridian", "Tapestry", "Citadel", "Lighthouse", "Archive", "Labyrinth",
    "Carousel", "Observatory", "Reliquary",
];

pub const DEBUT_YEARS: std::ops::RangeInclusive<u32> = 1890..=2019;

/// Real-world facts for the utility pool: `(subject, answer)`.
pub const CAPITALS: &[(&str, &str)] = &[
    ("France", "Paris"),
    ("Japan", "Tokyo"),
    ("Egypt", "Cairo"),
    ("Canada", "Ottawa"),
    ("Kenya", "Nairobi"),
    ("Peru", "Lima"),
    ("Norway", "Oslo"),
    ("Italy", "Rome"),
    ("Spain", "Madrid"),
    ("Chile", "Santiago"),
    ("Greece", "Athens"),
    ("Ireland", "Dublin"),
    ("Portugal", "Lisbon"),
    ("Austria", "Vienna"),
    ("Poland", "Warsaw"),
    ("Cuba", "Havana"),
];

pub const FILLER_DET: &[&str] = &["the", "a", "one", "every", "that", "some"];
pub const FILLER_ADJ: &[&str] = &[
    "quiet", "small", "green", "old", "bright", "slow", "warm", "tall", "soft", "heavy", "narrow", "distant", "pale",
    "busy", "calm", "dusty",
];
pub const FILLER_NOUN: &[&str] = &[
    "river", "garden", "window", "market", "bridge", "kitchen", "valley", "field", "road", "lamp", "table", "hill",
    "boat", "village", "cloud", "stone", "meadow", "well", "barn", "gate",
];
pub const FILLER_VERB: &[&str] = &[
    "passes", "covers", "faces", "follows", "joins", "holds", "crosses", "warms", "shades", "meets", "circles",
    "touches",
];
pub const FILLER_PREP: &[&str] = &["near", "behind", "above", "beside", "under", "beyond", "past", "along"];
