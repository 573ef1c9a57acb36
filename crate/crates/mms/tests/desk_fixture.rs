//! Source of `fixtures/desk.json`. Regenerate with
//! `MMS_UPDATE_FIXTURES=1 cargo test -p mms --test desk_fixture`.

use std::path::PathBuf;

use mms::eval::locomo::{
    parse_locomo, to_locomo_json, LocomoConversation, LocomoQa, LocomoSession,
};
use mms::model::{Category, DEFAULT_ROUND_WINDOW};

type Session = (&'static str, &'static [(&'static str, &'static str)]);
type Qa = (
    &'static str,
    Option<&'static str>,
    &'static [&'static str],
    Category,
);

const MAYA_JONAS: &[Session] = &[
    (
        "2:10 pm on 8 May, 2023",
        &[
            (
                "Maya",
                "Guess what, I adopted a puppy named Rex from the shelter on Saturday!",
            ),
            ("Jonas", "That is wonderful news. What breed is he?"),
            (
                "Maya",
                "Rex is a beagle mix with floppy ears and he loves chasing squirrels.",
            ),
        ],
    ),
    (
        "7:45 pm on 15 May, 2023",
        &[
            (
                "Jonas",
                "I finally signed up for the city half marathon in September.",
            ),
            ("Maya", "Impressive! How far do you run each week?"),
            (
                "Jonas",
                "About thirty kilometers, mostly along the river path before work.",
            ),
        ],
    ),
    (
        "11:05 am on 22 May, 2023",
        &[
            (
                "Maya",
                "My mother visited and we baked a lemon cake together.",
            ),
            ("Jonas", "That sounds cozy. Was it her recipe?"),
            (
                "Maya",
                "Yes, my mom has used the same lemon cake recipe for forty years.",
            ),
        ],
    ),
    (
        "6:30 pm on 2 June, 2023",
        &[
            (
                "Jonas",
                "I got a promotion at the design studio, I am now the lead architect.",
            ),
            ("Maya", "Congratulations! You deserve it."),
            (
                "Jonas",
                "Thanks, my boss announced it at the Friday meeting.",
            ),
        ],
    ),
    (
        "9:15 am on 10 June, 2023",
        &[
            (
                "Maya",
                "I booked a flight to Lisbon for the second week of July.",
            ),
            ("Jonas", "Lisbon is lovely, try the custard tarts."),
            ("Maya", "I will, I am staying in a small hotel in Alfama."),
        ],
    ),
    (
        "8:00 pm on 18 June, 2023",
        &[
            ("Jonas", "My sister Elena started nursing school in Boston."),
            ("Maya", "She must be so excited."),
            ("Jonas", "She is, she wants to work in pediatrics."),
        ],
    ),
    (
        "4:20 pm on 1 July, 2023",
        &[
            (
                "Maya",
                "Rex had his first vet appointment and got his vaccines.",
            ),
            ("Jonas", "Was he brave?"),
            ("Maya", "He was, the vet said he weighs nine kilograms."),
        ],
    ),
    (
        "10:40 am on 20 July, 2023",
        &[
            (
                "Maya",
                "I am back from Lisbon, the tram rides were my favorite part.",
            ),
            ("Jonas", "Did you see the ocean?"),
            ("Maya", "Yes, we spent one day at Cascais beach."),
        ],
    ),
    (
        "5:55 pm on 5 August, 2023",
        &[
            (
                "Jonas",
                "I started learning to play the cello on Sunday mornings.",
            ),
            ("Maya", "What made you pick the cello?"),
            (
                "Jonas",
                "I heard a cello concert in the park and fell in love with the sound.",
            ),
        ],
    ),
    (
        "1:25 pm on 1 September, 2023",
        &[
            (
                "Maya",
                "I moved into a new apartment with a small balcony garden.",
            ),
            ("Jonas", "Nice, what are you growing?"),
            ("Maya", "Tomatoes, basil and a few sunflowers."),
        ],
    ),
    (
        "3:35 pm on 24 September, 2023",
        &[
            (
                "Jonas",
                "I ran the half marathon yesterday and finished in one hour fifty two.",
            ),
            ("Maya", "That is a great time!"),
            ("Jonas", "My legs are sore but I am proud."),
        ],
    ),
];

const MAYA_JONAS_QA: &[Qa] = &[
    (
        "What is the name of Maya's new pet?",
        Some("Rex"),
        &["D1:1"],
        Category::SingleHop,
    ),
    (
        "Which family member did Maya bake with?",
        Some("her mother"),
        &["D3:1"],
        Category::SingleHop,
    ),
    (
        "What career news did Jonas share?",
        Some("a promotion to lead architect"),
        &["D4:1"],
        Category::SingleHop,
    ),
    (
        "What music hobby did Jonas pick up?",
        Some("playing the cello"),
        &["D9:1"],
        Category::SingleHop,
    ),
    (
        "When did Jonas run the half marathon?",
        Some("23 September 2023"),
        &["D11:1"],
        Category::Temporal,
    ),
    (
        "When did Maya take her pet to the animal doctor?",
        Some("1 July 2023"),
        &["D7:1"],
        Category::Temporal,
    ),
    (
        "Which city did Maya travel to on vacation and which beach did she spend a day at?",
        Some("Lisbon and Cascais beach"),
        &["D5:1", "D8:3"],
        Category::MultiHop,
    ),
    (
        "What exercise goal did Jonas train for and how did it go?",
        Some("a half marathon, finished in one hour fifty two"),
        &["D2:1", "D11:1"],
        Category::MultiHop,
    ),
    (
        "Where might Maya grow vegetables at home?",
        Some("on her balcony garden"),
        &["D10:1"],
        Category::OpenDomain,
    ),
    (
        "What is the name of Jonas's dog?",
        None,
        &["D1:1"],
        Category::Adversarial,
    ),
];

const PRIYA_TOM: &[Session] = &[
    (
        "9:00 am on 3 March, 2023",
        &[
            (
                "Priya",
                "I started a pottery class at the community center.",
            ),
            ("Tom", "Cool, what did you make first?"),
            ("Priya", "A slightly lopsided blue bowl."),
        ],
    ),
    (
        "6:15 pm on 12 March, 2023",
        &[
            (
                "Tom",
                "My daughter Lily turned six and we hosted a party in the backyard.",
            ),
            ("Priya", "Happy birthday to Lily!"),
            ("Tom", "She wanted a dinosaur cake, so I made one."),
        ],
    ),
    (
        "8:30 pm on 20 March, 2023",
        &[
            ("Priya", "I hurt my knee playing tennis last weekend."),
            ("Tom", "Ouch, did you see a doctor?"),
            ("Priya", "Yes, she said to rest it for three weeks."),
        ],
    ),
    (
        "12:45 pm on 2 April, 2023",
        &[
            (
                "Tom",
                "We went camping at Lake Tahoe over the long weekend.",
            ),
            ("Priya", "Did you swim?"),
            (
                "Tom",
                "The water was too cold, but the kids loved canoeing.",
            ),
        ],
    ),
    (
        "7:10 pm on 9 April, 2023",
        &[
            (
                "Priya",
                "I finished reading a novel by Octavia Butler called Kindred.",
            ),
            ("Tom", "Did you like it?"),
            ("Priya", "It was gripping, I read it in two days."),
        ],
    ),
    (
        "10:20 am on 18 April, 2023",
        &[
            ("Tom", "I quit my job at the bank to open a bakery."),
            ("Priya", "That is brave, what will you sell?"),
            ("Tom", "Sourdough bread and cinnamon rolls."),
        ],
    ),
    (
        "5:00 pm on 30 April, 2023",
        &[
            (
                "Priya",
                "My brother Arjun is getting married in December in Jaipur.",
            ),
            ("Tom", "Are you going?"),
            ("Priya", "Of course, I am giving a speech at the wedding."),
        ],
    ),
    (
        "3:30 pm on 15 May, 2023",
        &[
            (
                "Tom",
                "The bakery opened on Monday and we sold out by noon.",
            ),
            ("Priya", "Amazing, congratulations!"),
            ("Tom", "The cinnamon rolls were the most popular."),
        ],
    ),
    (
        "8:45 pm on 28 May, 2023",
        &[
            (
                "Priya",
                "My knee is better, so I joined a yoga studio near my office.",
            ),
            ("Tom", "Yoga is gentle, good choice."),
            ("Priya", "I go on Tuesday and Thursday evenings."),
        ],
    ),
    (
        "4:05 pm on 6 June, 2023",
        &[
            ("Tom", "Lily lost her first tooth at school today."),
            ("Priya", "Did the tooth fairy come?"),
            ("Tom", "She left two dollars under the pillow."),
        ],
    ),
    (
        "11:50 am on 19 June, 2023",
        &[
            (
                "Priya",
                "I painted a portrait of my grandmother for her ninetieth birthday.",
            ),
            ("Tom", "She must have been touched."),
            ("Priya", "She cried and hung it in her living room."),
        ],
    ),
];

const PRIYA_TOM_QA: &[Qa] = &[
    (
        "What did Priya make first for her art hobby?",
        Some("a lopsided blue bowl"),
        &["D1:1", "D1:3"],
        Category::SingleHop,
    ),
    (
        "How old did Tom's daughter turn?",
        Some("six"),
        &["D2:1"],
        Category::SingleHop,
    ),
    (
        "What celebration will Priya give a speech at?",
        Some("her brother's wedding"),
        &["D7:1", "D7:3"],
        Category::SingleHop,
    ),
    (
        "What vacation did Tom's family take?",
        Some("camping at Lake Tahoe"),
        &["D4:1"],
        Category::SingleHop,
    ),
    (
        "When is Priya's brother getting married?",
        Some("December"),
        &["D7:1"],
        Category::Temporal,
    ),
    (
        "When did Tom's bakery open?",
        Some("Monday 15 May 2023"),
        &["D8:1"],
        Category::Temporal,
    ),
    (
        "What health problem did Priya have and which exercise did she take up after it?",
        Some("a knee injury, then yoga"),
        &["D3:1", "D9:1"],
        Category::MultiHop,
    ),
    (
        "What career change did Tom make and what sold best?",
        Some("he quit the bank to open a bakery; cinnamon rolls"),
        &["D6:1", "D8:3"],
        Category::MultiHop,
    ),
    (
        "What book genre might Priya enjoy?",
        Some("science fiction"),
        &["D5:1"],
        Category::OpenDomain,
    ),
    (
        "What did Priya's daughter make for her birthday?",
        None,
        &["D2:1"],
        Category::Adversarial,
    ),
];

const LENA_OMAR: &[Session] = &[
    (
        "8:20 pm on 14 April, 2023",
        &[
            (
                "Lena",
                "I just got back from Tokyo, the cherry blossoms were stunning.",
            ),
            ("Omar", "Did you visit any temples?"),
            ("Lena", "Senso-ji in Asakusa was my favorite."),
        ],
    ),
    (
        "1:00 pm on 22 April, 2023",
        &[
            ("Omar", "I adopted two kittens, Miso and Nori."),
            ("Lena", "Adorable names!"),
            ("Omar", "Nori is the shy one, Miso climbs everything."),
        ],
    ),
    (
        "6:40 pm on 5 May, 2023",
        &[
            ("Lena", "I enrolled in an online course on data science."),
            ("Omar", "How is it going?"),
            ("Lena", "The statistics lessons are hard but interesting."),
        ],
    ),
    (
        "9:30 pm on 13 May, 2023",
        &[
            (
                "Omar",
                "My band played our first gig at a jazz bar downtown.",
            ),
            ("Lena", "What do you play?"),
            ("Omar", "I play the saxophone."),
        ],
    ),
    (
        "7:00 am on 27 May, 2023",
        &[
            ("Lena", "I climbed Mount Rainier with my climbing club."),
            ("Omar", "That is a serious climb!"),
            ("Lena", "We reached the summit at dawn."),
        ],
    ),
    (
        "2:15 pm on 8 June, 2023",
        &[
            ("Omar", "My father had heart surgery last week."),
            ("Lena", "I hope he recovers quickly."),
            ("Omar", "The doctors say the operation went well."),
        ],
    ),
    (
        "5:25 pm on 21 June, 2023",
        &[
            ("Lena", "I bought a used bike to commute to the lab."),
            ("Omar", "What color is it?"),
            ("Lena", "It is a green Peugeot from the seventies."),
        ],
    ),
    (
        "10:10 pm on 1 July, 2023",
        &[
            ("Omar", "I cooked paella for my friends on Saturday."),
            ("Lena", "Did it turn out well?"),
            ("Omar", "Yes, the crispy rice at the bottom was perfect."),
        ],
    ),
    (
        "11:30 am on 19 July, 2023",
        &[
            ("Lena", "I passed my data science exam with a ninety two."),
            ("Omar", "Well done!"),
            ("Lena", "Now I want to apply for analyst jobs."),
        ],
    ),
    (
        "3:50 pm on 2 August, 2023",
        &[
            ("Omar", "Miso knocked a plant off the shelf again."),
            ("Lena", "Cats will be cats."),
            ("Omar", "I moved all the plants to the balcony."),
        ],
    ),
    (
        "12:05 pm on 20 October, 2023",
        &[
            (
                "Lena",
                "I got hired as a junior data analyst at a climate startup.",
            ),
            ("Omar", "Fantastic news!"),
            ("Lena", "I start on the first of November."),
        ],
    ),
];

const LENA_OMAR_QA: &[Qa] = &[
    (
        "What are the names of Omar's pets?",
        Some("Miso and Nori"),
        &["D2:1"],
        Category::SingleHop,
    ),
    (
        "What instrument does Omar play in his band?",
        Some("the saxophone"),
        &["D4:3"],
        Category::SingleHop,
    ),
    (
        "Which family member of Omar had surgery?",
        Some("his father"),
        &["D6:1"],
        Category::SingleHop,
    ),
    (
        "What food did Omar cook for his friends?",
        Some("paella"),
        &["D8:1"],
        Category::SingleHop,
    ),
    (
        "When does Lena start her new job?",
        Some("the first of November"),
        &["D11:3"],
        Category::Temporal,
    ),
    (
        "When did Lena climb Mount Rainier?",
        Some("May 2023"),
        &["D5:1"],
        Category::Temporal,
    ),
    (
        "What did Lena study and what job did she get afterwards?",
        Some("data science; junior data analyst at a climate startup"),
        &["D3:1", "D11:1"],
        Category::MultiHop,
    ),
    (
        "Which trip did Lena take and what fitness challenge did she complete?",
        Some("a trip to Tokyo and climbing Mount Rainier"),
        &["D1:1", "D5:1"],
        Category::MultiHop,
    ),
    (
        "What kind of exercise club might Lena join next?",
        Some("a climbing club"),
        &["D5:1"],
        Category::OpenDomain,
    ),
    (
        "What instrument does Lena play in the band?",
        None,
        &["D4:1"],
        Category::Adversarial,
    ),
];

fn conversation(
    sample_id: &str,
    speakers: (&str, &str),
    sessions: &[Session],
    qa: &[Qa],
) -> LocomoConversation {
    LocomoConversation {
        sample_id: sample_id.into(),
        speaker_a: speakers.0.into(),
        speaker_b: speakers.1.into(),
        sessions: sessions
            .iter()
            .map(|(date_time, turns)| LocomoSession {
                date_time: date_time.to_string(),
                turns: turns
                    .iter()
                    .map(|(s, t)| (s.to_string(), t.to_string()))
                    .collect(),
            })
            .collect(),
        qa: qa
            .iter()
            .map(|(question, answer, evidence, category)| LocomoQa {
                question: question.to_string(),
                answer: answer.map(str::to_string),
                evidence: evidence.iter().map(|e| e.to_string()).collect(),
                category: *category,
            })
            .collect(),
    }
}

fn desk_json() -> String {
    let conversations = [
        conversation("conv-maya", ("Maya", "Jonas"), MAYA_JONAS, MAYA_JONAS_QA),
        conversation("conv-priya", ("Priya", "Tom"), PRIYA_TOM, PRIYA_TOM_QA),
        conversation("conv-lena", ("Lena", "Omar"), LENA_OMAR, LENA_OMAR_QA),
    ];
    let mut text = serde_json::to_string_pretty(&to_locomo_json(&conversations)).unwrap();
    text.push('\n');
    text
}

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/desk.json")
}

#[test]
fn committed_fixture_matches_source() {
    let expected = desk_json();
    let path = fixture_path();
    if std::env::var_os("MMS_UPDATE_FIXTURES").is_some() {
        std::fs::write(&path, &expected).unwrap();
    }
    let committed = std::fs::read_to_string(&path).expect("fixtures/desk.json is missing");
    assert_eq!(
        committed, expected,
        "fixture is stale; rerun with MMS_UPDATE_FIXTURES=1"
    );
}

#[test]
fn fixture_counts() {
    let corpus = parse_locomo(&desk_json(), DEFAULT_ROUND_WINDOW).unwrap();
    assert_eq!(
        corpus.conversations,
        ["conv-maya", "conv-priya", "conv-lena"]
    );
    assert_eq!(corpus.rounds.len(), 33);
    assert_eq!(corpus.queries.len(), 30);
    for category in Category::ALL {
        assert!(
            corpus.queries.iter().any(|q| q.category == category),
            "{category:?}"
        );
    }
    let multi = corpus
        .queries
        .iter()
        .filter(|q| q.gold_evidence.len() > 1)
        .count();
    assert!(multi >= 6);
    let rounds_per_conv = |id: &str| {
        corpus
            .rounds
            .iter()
            .filter(|r| r.session_id.starts_with(id))
            .count()
    };
    assert_eq!(rounds_per_conv("conv-maya:"), 11);
    assert_eq!(rounds_per_conv("conv-priya:"), 11);
    assert_eq!(rounds_per_conv("conv-lena:"), 11);
}
