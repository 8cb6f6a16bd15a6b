//! Quantile closed forms frozen from 40-digit mpmath evaluations.

/// `(n, L, α, S2, S3, S4, S5 with c4 = 2, S5 simplified)`.
#[rustfmt::skip]
#[allow(clippy::excessive_precision)]
pub const FROZEN: [(usize, usize, f64, f64, f64, f64, Option<f64>, f64); 20] = [
    (49, 51, 0.05, 0.5044459771936657087, 0.52789644321435099092, 0.47087056745303888145, Some(0.74797849632140899425), 0.84706228045300803399),
    (49, 50, 0.05, 0.50364419326046777928, 0.52717726752495638011, 0.47007524735598497046, Some(0.74666500530348682249), 0.84610753806031102158),
    (100, 10, 0.1, 0.2797149622536537125, 0.3056360364562567458, 0.2575829303548900761, Some(0.38543264468191899116), 0.50861242572498530926),
    (500, 200, 0.01, 0.1919410364875232483, 0.1964414977143803215, 0.18137315242343890845, Some(0.22222991762351820394), 0.30679611935739186109),
    (8000, 51, 0.05, 0.039479142359347079209, 0.041314431623767624025, 0.036851450910011323323, Some(0.04692789496530151249), 0.066293109409412106134),
    (20, 5, 0.2, 0.5025662786447430796, 0.58439923123558289682, 0.45923221728888969103, Some(1.0163070686365557078), 1.0080546244054884381),
    (1000, 1000, 0.025, 0.14073725556892267356, 0.1435963595949054262, 0.13328366838502381138, Some(0.15985616840642006103), 0.22323646240840069751),
    (3000, 3, 0.05, 0.047617905467461539573, 0.052942828960164842278, 0.043707891285743320743, Some(0.063140508106805011329), 0.089116697771557579683),
    (250, 25, 0.1, 0.1965362813793382247, 0.21005399882556792916, 0.18203093139786037702, Some(0.25055070542006079863), 0.34370814879884352291),
    (64, 100, 0.01, 0.51590918506240748997, 0.52993454211521903783, 0.48632398580163674588, Some(0.72737643415126869151), 0.83187796490960866994),
    (10000, 2, 0.05, 0.024477468306808165464, 0.02770266453177377686, 0.022414027276049453751, Some(0.033337797012306622394), 0.047120586830692961498),
    (30, 60, 0.05, 0.65304056306971449714, 0.6821633312276785815, 0.61006779988371741897, Some(1.2166298157243488523), 1.0925243942255533765),
    (2000, 500, 0.05, 0.092288640641284978386, 0.0947975727835883967, 0.086996279307288185509, Some(0.10581259098617822033), 0.14881085428176557456),
    (75, 8, 0.3, 0.26281893211592534797, 0.30432027642237331237, 0.2402098649109691647, Some(0.39878792630490811472), 0.5238528622969887844),
    (400, 400, 0.001, 0.24704324161500728787, 0.25022444280741470347, 0.23540648578767815369, Some(0.28228973444853234044), 0.38420326170073530651),
    (5000, 51, 0.1, 0.047079777166670728185, 0.049713505812173556522, 0.0437855899105669211, Some(0.057000741876195976171), 0.080480584141899082204),
    (150, 12, 0.05, 0.25265237627438604123, 0.27024695235890992322, 0.23394751882296474961, Some(0.32943397648164050414), 0.44249696729356966702),
    (12, 4, 0.05, 0.78410027569968543988, 0.86279952947132305426, 0.72102546400419269462, None, 1.4426851630128375187),
    (900, 90, 0.02, 0.13096806646573953479, 0.13522081045375769784, 0.12307715753413942675, Some(0.1528533553446162701), 0.21368541238430814333),
    (60000, 1000, 0.05, 0.017521739232523106595, 0.017932573254710938881, 0.01655702781802337936, Some(0.019807488807764050297), 0.028006525854515145041),
];
